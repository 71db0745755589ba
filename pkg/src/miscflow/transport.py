"""Implicit-Euler finite-volume transport and the sequential flow/transport step.

Per cell ``i`` the discrete concentration balance is

    phi_i vol (c_i - c_i^n)/dt + sum_f (convective + dispersive outflux)
        + q_P,i c_i vol = c_hat_i q_I,i vol

Convection is upwinded on the Darcy face fluxes.  Dispersion uses the
face-averaged tensor ``D_f = (D_L + D_R)/2``: its normal-normal entry gives an
implicit two-point flux, its off-diagonal entry multiplies the tangential
derivative of ``c^n`` and is treated explicitly.  Each explicit face flux is
scaled by a factor in [0, 1] chosen so the right-hand side stays inside
``[0, A 1]``; with ``A`` an M-matrix this keeps ``c`` in [0, 1].
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import HypothesisError, MaximumPrincipleError, SolverError
from .fields import CoefficientFields, DispersionModel, FluidModel, cell_dispersion, tensor_sqrt
from .grid import FaceField, Grid
from .linalg import SparseMatrix, assemble_csr, relative_residual, solve_bicgstab, solve_cg
from .pressure import assemble_pressure, cell_velocity, fluxes_from_pressure, hydrostatic_guess
from .wells import RegularizedMeasure, WellSet, WellSources, regularize_measure, well_sources

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverSettings:
    pressure_tol: float = 1e-12
    transport_tol: float = 1e-12
    maxit: int | None = None
    picard_max: int = 1
    picard_tol: float = 1e-8
    upwind: bool = True
    strict: bool = True
    overshoot_tol: float = 1e-10


@dataclass(frozen=True)
class Model:
    grid: Grid
    coeffs: CoefficientFields
    fluid: FluidModel
    dispersion: DispersionModel
    wells: WellSet
    settings: SolverSettings = SolverSettings()
    nu: RegularizedMeasure | None = None

    def __post_init__(self):
        if self.nu is None:
            object.__setattr__(self, "nu", regularize_measure(self.wells, self.grid))

    def sources(self, t: float) -> WellSources:
        return well_sources(self.wells, self.nu, t)

    def with_(self, **kw) -> "Model":
        if "wells" in kw or "grid" in kw:
            kw.setdefault("nu", None)
        return replace(self, **kw)


@dataclass(frozen=True)
class StepDiagnostics:
    step: int
    time: float
    dt: float
    c_min: float
    c_max: float
    mass_change: float
    net_source: float
    mass_scale: float
    energy: float
    dissipation: float
    sqrt_form: float
    compat_residual: float
    a_max: float
    b_max: float
    lam: float
    dtc_norm: float
    max_speed: float
    theta: float
    picard_iters: int
    transport_residual: float

    @property
    def mass_residual(self) -> float:
        return self.mass_change - self.net_source

    @property
    def mass_residual_rel(self) -> float:
        return abs(self.mass_residual) / self.mass_scale if self.mass_scale > 0 else abs(self.mass_residual)


@dataclass(frozen=True)
class SimState:
    time: float
    step: int
    c: np.ndarray
    p: np.ndarray
    U: FaceField
    u_cell: np.ndarray
    injected: float = 0.0
    produced: float = 0.0
    diag: StepDiagnostics | None = field(default=None, repr=False)


@dataclass(frozen=True)
class TransportSystem:
    matrix: SparseMatrix
    rhs: np.ndarray
    theta_x: np.ndarray
    theta_y: np.ndarray
    tdx: np.ndarray
    tdy: np.ndarray
    fx: np.ndarray
    fy: np.ndarray
    dfx: np.ndarray
    dfy: np.ndarray

    @property
    def theta(self) -> float:
        """Smallest cross-flux limiter over all faces (1 = unlimited)."""
        return float(min(self.theta_x.min(initial=1.0), self.theta_y.min(initial=1.0)))


def _limit_cross_fluxes(A: SparseMatrix, base: np.ndarray, f: np.ndarray,
                        left: np.ndarray, right: np.ndarray) -> np.ndarray:
    """Per-face factors keeping ``base + explicit fluxes`` inside ``[0, A 1]``.

    Each cell shares its headroom among incoming contributions of one sign;
    a face takes the smaller factor of its two cells, so both bounds hold.
    """
    n = base.shape[0]
    room_up = np.maximum(np.asarray(A.sum(axis=1)).ravel() - base, 0.0)
    room_down = np.maximum(base, 0.0)
    # contribution of face f: -f to the left cell, +f to the right cell
    gain = np.zeros(n)
    loss = np.zeros(n)
    np.add.at(gain, left, np.maximum(-f, 0.0))
    np.add.at(loss, left, np.maximum(f, 0.0))
    np.add.at(gain, right, np.maximum(f, 0.0))
    np.add.at(loss, right, np.maximum(-f, 0.0))
    r_up = np.where(gain > 0, np.minimum(1.0, room_up / np.where(gain > 0, gain, 1.0)), 1.0)
    r_down = np.where(loss > 0, np.minimum(1.0, room_down / np.where(loss > 0, loss, 1.0)), 1.0)
    return np.where(f > 0, np.minimum(r_down[left], r_up[right]),
                    np.minimum(r_up[left], r_down[right]))


def weighted_l2sq(g: Grid, phi: np.ndarray, c: np.ndarray) -> float:
    return float(np.sum(phi * c * c) * g.cell_volume)


def cell_gradients(g: Grid, c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Central differences with mirrored ghost cells (zero normal derivative)."""
    cp = np.pad(c, 1, mode="edge")
    gx = (cp[1:-1, 2:] - cp[1:-1, :-2]) / (2.0 * g.hx)
    gy = (cp[2:, 1:-1] - cp[:-2, 1:-1]) / (2.0 * g.hy)
    return gx, gy


def face_tensors(D_cell: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Arithmetic face averages of the cell tensors on interior x- and y-faces."""
    return 0.5 * (D_cell[:, :-1] + D_cell[:, 1:]), 0.5 * (D_cell[:-1, :] + D_cell[1:, :])


def assemble_transport(g: Grid, phi: np.ndarray, D_cell: np.ndarray, U: FaceField,
                       c_old: np.ndarray, inj: np.ndarray, sink: np.ndarray, dt: float,
                       *, upwind: bool = True, forcing: np.ndarray | None = None,
                       limit_cross: bool = True) -> TransportSystem:
    """Linear system for ``c^{n+1}``.

    ``inj`` is the injected-mass density ``c_hat * q_I`` and ``sink`` the
    production density ``q_P`` (both per unit volume); ``forcing`` is an
    optional extra volumetric source (manufactured solutions).
    """
    if not dt > 0:
        raise ValueError(f"time step must be > 0, got {dt}")
    n = g.n_cells
    vol = g.cell_volume
    lx, rx = g.interior_x_faces()
    ly, ry = g.interior_y_faces()
    left = np.concatenate([lx, ly])
    right = np.concatenate([rx, ry])

    dfx, dfy = face_tensors(D_cell)
    tdx = dfx[..., 0, 0] * (g.area_x / g.hx)
    tdy = dfy[..., 1, 1] * (g.area_y / g.hy)
    gx, gy = cell_gradients(g, c_old)
    # explicit cross fluxes, oriented left -> right
    fx = -dfx[..., 0, 1] * 0.5 * (gy[:, :-1] + gy[:, 1:]) * g.area_x
    fy = -dfy[..., 1, 0] * 0.5 * (gx[:-1, :] + gx[1:, :]) * g.area_y

    td = np.concatenate([tdx.ravel(), tdy.ravel()])
    uf = np.concatenate([U.x[:, 1:-1].ravel(), U.y[1:-1, :].ravel()])
    if upwind:
        up = np.maximum(uf, 0.0)
        um = np.maximum(-uf, 0.0)
        a_ll, a_lr, a_rl, a_rr = up, -um, -up, um
    else:
        half = 0.5 * uf
        a_ll, a_lr, a_rl, a_rr = half, half, -half, -half

    diag = phi.ravel() * vol / dt + np.asarray(sink, dtype=float).ravel() * vol
    rows = np.concatenate([np.arange(n), left, left, right, right])
    cols = np.concatenate([np.arange(n), left, right, left, right])
    vals = np.concatenate([diag, td + a_ll, -td + a_lr, -td + a_rl, td + a_rr])
    A = assemble_csr(rows, cols, vals, n)

    base = phi.ravel() * vol / dt * c_old.ravel() + np.asarray(inj, dtype=float).ravel() * vol
    if forcing is not None:
        base = base + np.asarray(forcing, dtype=float).ravel() * vol
    fcat = np.concatenate([fx.ravel(), fy.ravel()])
    theta = np.ones_like(fcat)
    if limit_cross and np.any(fcat != 0.0):
        theta = _limit_cross_fluxes(A, base, fcat, left, right)
    X = np.zeros(n)
    np.subtract.at(X, left, theta * fcat)
    np.add.at(X, right, theta * fcat)
    rhs = base + X
    nfx = fx.size
    tx = theta[:nfx].reshape(fx.shape)
    ty = theta[nfx:].reshape(fy.shape)
    return TransportSystem(A, rhs, tx, ty, tdx, tdy, fx, fy, dfx, dfy)


def dispersion_work(g: Grid, ts: TransportSystem, c: np.ndarray) -> float:
    """Discrete dispersion bilinear form ``-sum_f J_f (c_R - c_L)`` of the scheme."""
    dx = c[:, 1:] - c[:, :-1]
    dy = c[1:, :] - c[:-1, :]
    return float(np.sum(ts.tdx * dx * dx) + np.sum(ts.tdy * dy * dy)
                 - np.sum(ts.theta_x * ts.fx * dx) - np.sum(ts.theta_y * ts.fy * dy))


def sqrt_dispersion_norm(g: Grid, ts: TransportSystem, c: np.ndarray) -> float:
    """``sum_f |D_f^{1/2} grad_f c|^2`` over face diamonds (area ``area * dist / 2``)."""
    gx, gy = cell_gradients(g, c)
    grad_x = np.stack([(c[:, 1:] - c[:, :-1]) / g.hx, 0.5 * (gy[:, :-1] + gy[:, 1:])], axis=-1)
    grad_y = np.stack([0.5 * (gx[:-1, :] + gx[1:, :]), (c[1:, :] - c[:-1, :]) / g.hy], axis=-1)
    total = 0.0
    for D, grad, w in ((ts.dfx, grad_x, 0.5 * g.area_x * g.hx),
                       (ts.dfy, grad_y, 0.5 * g.area_y * g.hy)):
        if D.size == 0:
            continue
        v = np.einsum("...ij,...j->...i", tensor_sqrt(D), grad)
        total += w * float(np.sum(v * v))
    return total


def _sample(g: Grid, c0) -> np.ndarray:
    if callable(c0):
        X, Y = g.cell_centers()
        return np.asarray(c0(X, Y), dtype=float) * np.ones(g.shape)
    arr = np.asarray(c0, dtype=float)
    if arr.ndim == 0:
        return np.full(g.shape, float(arr))
    return arr.reshape(g.shape).copy()


def _flow(model: Model, c: np.ndarray, src: WellSources, p_guess: np.ndarray | None):
    g = model.grid
    sys = assemble_pressure(g, model.coeffs, model.fluid, c, src.q_inj - src.q_prod)
    if p_guess is None and model.fluid.has_gravity:
        p_guess = hydrostatic_guess(g, model.fluid, c)
    x0 = None if p_guess is None else p_guess.ravel()
    p = solve_cg(sys.matrix, sys.rhs, tol=model.settings.pressure_tol,
                 maxit=model.settings.maxit, nullspace=True, x0=x0)
    p = (p - p.mean()).reshape(g.shape)
    U = fluxes_from_pressure(g, sys.faces, p)
    return p, U


def init_state(model: Model, c0) -> SimState:
    g = model.grid
    c = _sample(g, c0)
    if np.any(c < 0.0) or np.any(c > 1.0) or not np.all(np.isfinite(c)):
        raise HypothesisError(
            "initial-concentration",
            f"initial concentration out of [0, 1]: range [{c.min()}, {c.max()}]",
        )
    p, U = _flow(model, c, model.sources(0.0), None)
    return SimState(0.0, 0, c, p, U, cell_velocity(g, U))


def step(state: SimState, dt: float, model: Model) -> SimState:
    """Advance one time step with sequential (optionally Picard-iterated) coupling."""
    if not dt > 0:
        raise ValueError(f"time step must be > 0, got {dt}")
    g, st = model.grid, model.settings
    phi = model.coeffs.phi
    vol = g.cell_volume
    src = model.sources(state.time + 0.5 * dt)
    inj = src.c_hat * src.q_inj
    sink = src.q_prod

    c_iter = state.c
    p_guess = state.p
    iters = 0
    for iters in range(1, st.picard_max + 1):
        p, U = _flow(model, c_iter, src, p_guess)
        u_cell = cell_velocity(g, U)
        D = cell_dispersion(phi, u_cell, model.dispersion)
        ts = assemble_transport(g, phi, D, U, state.c, inj, sink, dt, upwind=st.upwind)
        try:
            c_flat = solve_bicgstab(ts.matrix, ts.rhs, tol=st.transport_tol, maxit=st.maxit,
                                    x0=c_iter.ravel())
        except SolverError as exc:
            raise SolverError(f"transport solve failed at step {state.step + 1}: {exc}",
                              exc.residual, exc.iterations) from exc
        c_new = c_flat.reshape(g.shape)
        if st.picard_max == 1:
            break
        change = float(np.max(np.abs(c_new - c_iter)))
        c_iter, p_guess = c_new, p
        if change <= st.picard_tol:
            break
    else:
        raise SolverError(
            f"Picard iteration did not converge at step {state.step + 1} "
            f"(last update {change:.3e} > {st.picard_tol:.1e} after {st.picard_max} iterations)"
        )
    t_res = relative_residual(ts.matrix, c_new.ravel(), ts.rhs)

    c_min, c_max = float(c_new.min()), float(c_new.max())
    overshoot = max(-c_min, c_max - 1.0)
    if overshoot > st.overshoot_tol:
        if st.strict:
            raise MaximumPrincipleError(
                f"step {state.step + 1}: concentration range [{c_min:.3e}, {c_max:.3e}] "
                f"leaves [0, 1] by {overshoot:.3e}"
            )
    else:
        c_new = np.clip(c_new, 0.0, 1.0)

    mass_change = float(np.sum(phi * (c_new - state.c)) * vol)
    inj_mass = dt * float(np.sum(inj)) * vol
    prod_mass = dt * float(np.sum(sink * c_new)) * vol
    mass_scale = float(np.sum(phi * state.c)) * vol + inj_mass + prod_mass
    diag = StepDiagnostics(
        step=state.step + 1,
        time=state.time + dt,
        dt=dt,
        c_min=c_min,
        c_max=c_max,
        mass_change=mass_change,
        net_source=inj_mass - prod_mass,
        mass_scale=mass_scale,
        energy=0.5 * weighted_l2sq(g, phi, c_new),
        dissipation=dt * dispersion_work(g, ts, c_new),
        sqrt_form=dt * sqrt_dispersion_norm(g, ts, c_new),
        compat_residual=abs(math.fsum((src.q_inj - src.q_prod).ravel()) * vol),
        a_max=float(src.a.max(initial=0.0)),
        b_max=float(src.b.max(initial=0.0)),
        lam=src.lam,
        dtc_norm=math.sqrt(float(np.sum((phi * (c_new - state.c) / dt) ** 2)) * vol),
        max_speed=float(np.sqrt((u_cell ** 2).sum(axis=-1)).max()),
        theta=ts.theta,
        picard_iters=iters,
        transport_residual=t_res,
    )
    return SimState(
        time=state.time + dt,
        step=state.step + 1,
        c=c_new,
        p=p,
        U=U,
        u_cell=u_cell,
        injected=state.injected + inj_mass,
        produced=state.produced + prod_mass,
        diag=diag,
    )


def time_levels(T: float, dt: float) -> list[float]:
    """Step sizes covering ``[0, T]``; the last one is shortened if needed."""
    if not (T > 0 and dt > 0):
        raise ValueError("final time and time step must be > 0")
    n = max(1, int(math.ceil(T / dt - 1e-9)))
    steps = [dt] * (n - 1)
    steps.append(T - dt * (n - 1))
    return steps


def simulate(model: Model, c0, T: float, dt: float,
             callback: Callable[[SimState], None] | None = None) -> list[SimState]:
    """Run from ``c0`` to ``T`` and return the full state history (initial state first)."""
    state = init_state(model, c0)
    history = [state]
    if callback:
        callback(state)
    for h in time_levels(T, dt):
        state = step(state, h, model)
        history.append(state)
        if callback:
            callback(state)
    log.debug("finished %d steps, t=%g", state.step, state.time)
    return history
