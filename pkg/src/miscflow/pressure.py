"""Pure-Neumann pressure equation and Darcy fluxes (two-point flux approximation).

Face mobilities are harmonic means of ``K_nn / mu(c)`` of the two adjacent
cells.  Gravity enters each face as ``lambda_f * area * rho_f * (g . n)`` with
the arithmetic mean density, so a hydrostatic pressure ``p = rho g . x``
produces identically zero flux.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import CoefficientFields, FluidModel, density, viscosity
from .grid import FaceField, Grid
from .linalg import SparseMatrix, assemble_csr, relative_residual, solve_cg


@dataclass(frozen=True)
class FaceCoefficients:
    """Interior-face transmissibilities and gravity fluxes.

    ``tx, gx`` have shape ``(ny, nx - 1)``; ``ty, gy`` shape ``(ny - 1, nx)``.
    """

    tx: np.ndarray
    ty: np.ndarray
    gx: np.ndarray
    gy: np.ndarray


@dataclass(frozen=True)
class PressureSystem:
    matrix: SparseMatrix
    rhs: np.ndarray
    faces: FaceCoefficients
    grid: Grid


def _harmonic(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return 2.0 * a * b / (a + b)


def face_coefficients(g: Grid, cf: CoefficientFields, fm: FluidModel,
                      c: np.ndarray) -> FaceCoefficients:
    if not cf.is_diagonal:
        raise NotImplementedError(
            "two-point fluxes need a grid-aligned (diagonal) permeability tensor"
        )
    mu = viscosity(c, fm)
    lam_x = cf.K[..., 0, 0] / mu
    lam_y = cf.K[..., 1, 1] / mu
    lfx = _harmonic(lam_x[:, :-1], lam_x[:, 1:])
    lfy = _harmonic(lam_y[:-1, :], lam_y[1:, :])
    tx = lfx * (g.area_x / g.hx)
    ty = lfy * (g.area_y / g.hy)
    if fm.has_gravity:
        rho = density(c, fm)
        gx = lfx * g.area_x * 0.5 * (rho[:, :-1] + rho[:, 1:]) * fm.g[0]
        gy = lfy * g.area_y * 0.5 * (rho[:-1, :] + rho[1:, :]) * fm.g[1]
    else:
        gx = np.zeros_like(tx)
        gy = np.zeros_like(ty)
    return FaceCoefficients(tx, ty, gx, gy)


def assemble_pressure(g: Grid, cf: CoefficientFields, fm: FluidModel, c: np.ndarray,
                      sources: np.ndarray) -> PressureSystem:
    """Assemble ``A p = rhs`` for ``-div(K/mu (grad p - rho g)) = sources``.

    ``sources`` is the net density ``q_I - q_P`` per cell; the rhs is in
    flux units (multiplied by cell volume).
    """
    fc = face_coefficients(g, cf, fm, c)
    lx, rx = g.interior_x_faces()
    ly, ry = g.interior_y_faces()
    left = np.concatenate([lx, ly])
    right = np.concatenate([rx, ry])
    t = np.concatenate([fc.tx.ravel(), fc.ty.ravel()])
    rows = np.concatenate([left, right, left, right])
    cols = np.concatenate([left, right, right, left])
    vals = np.concatenate([t, t, -t, -t])
    A = assemble_csr(rows, cols, vals, g.n_cells)

    rhs = np.asarray(sources, dtype=float).ravel() * g.cell_volume
    grav = np.concatenate([fc.gx.ravel(), fc.gy.ravel()])
    if np.any(grav):
        rhs = rhs.copy()
        np.subtract.at(rhs, left, grav)
        np.add.at(rhs, right, grav)
    return PressureSystem(A, rhs, fc, g)


def solve_pressure(sys: PressureSystem, tol: float = 1e-12, maxit: int | None = None) -> np.ndarray:
    """Mean-zero solution of the singular Neumann system, shape ``(ny, nx)``."""
    p = solve_cg(sys.matrix, sys.rhs, tol=tol, maxit=maxit, nullspace=True)
    p = p - p.mean()
    return p.reshape(sys.grid.shape)


def hydrostatic_guess(g: Grid, fm: FluidModel, c: np.ndarray) -> np.ndarray:
    """Mean-zero ``rho(c) g.x``: the exact discrete solution when density is uniform.

    Used to seed the first pressure solve so a fluid at rest stays at rest
    to round-off rather than to the solver tolerance.
    """
    X, Y = g.cell_centers()
    pot = density(c, fm) * (fm.g[0] * X + fm.g[1] * Y)
    return pot - pot.mean()


def fluxes_from_pressure(g: Grid, fc: FaceCoefficients, p: np.ndarray) -> FaceField:
    U = FaceField.zeros(g)
    U.x[:, 1:-1] = -fc.tx * (p[:, 1:] - p[:, :-1]) + fc.gx
    U.y[1:-1, :] = -fc.ty * (p[1:, :] - p[:-1, :]) + fc.gy
    return U


def darcy_flux(g: Grid, cf: CoefficientFields, fm: FluidModel, c: np.ndarray,
               p: np.ndarray) -> FaceField:
    """Face-normal Darcy fluxes ``U_f = -T_f (p_R - p_L) + G_f``; zero on the boundary."""
    return fluxes_from_pressure(g, face_coefficients(g, cf, fm, c), np.asarray(p))


def cell_velocity(g: Grid, U: FaceField) -> np.ndarray:
    """Cell-centred velocity vectors, shape ``(ny, nx, 2)``."""
    u = np.empty(g.shape + (2,))
    u[..., 0] = 0.5 * (U.x[:, :-1] + U.x[:, 1:]) / g.area_x
    u[..., 1] = 0.5 * (U.y[:-1, :] + U.y[1:, :]) / g.area_y
    return u


def pressure_residual(sys: PressureSystem, p: np.ndarray) -> float:
    rhs = sys.rhs - sys.rhs.mean()
    return relative_residual(sys.matrix, np.asarray(p).ravel(), rhs)
