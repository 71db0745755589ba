"""Coefficient fields and constitutive laws.

All tensor-valued helpers are vectorised: a velocity argument of shape
``(..., 2)`` yields tensors of shape ``(..., 2, 2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import HypothesisError
from .grid import Grid


@dataclass(frozen=True)
class CoefficientFields:
    """Porosity and permeability on the cells of a grid.

    ``phi`` has shape ``(ny, nx)``; ``K`` has shape ``(ny, nx, 2, 2)``.
    """

    phi: np.ndarray
    K: np.ndarray
    phi_star: float
    k_star: float

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=float)
        K = np.asarray(self.K, dtype=float)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "K", K)
        if not 0.0 < self.phi_star <= 1.0:
            raise HypothesisError("porosity", f"phi_star must lie in (0, 1], got {self.phi_star}")
        if not 0.0 < self.k_star <= 1.0:
            raise HypothesisError("permeability", f"k_star must lie in (0, 1], got {self.k_star}")
        if K.shape != phi.shape + (2, 2):
            raise ValueError(f"K shape {K.shape} does not match porosity shape {phi.shape}")
        tol = 1e-12
        if np.any(phi < self.phi_star * (1 - tol)) or np.any(phi > (1 + tol) / self.phi_star):
            raise HypothesisError(
                "porosity",
                f"porosity range [{phi.min()}, {phi.max()}] outside "
                f"[{self.phi_star}, {1 / self.phi_star}]",
            )
        if not np.allclose(K, np.swapaxes(K, -1, -2), rtol=0, atol=tol * np.abs(K).max()):
            raise HypothesisError("permeability", "permeability tensor is not symmetric")
        eig = np.linalg.eigvalsh(K)
        if eig.min() < self.k_star * (1 - tol) or eig.max() > (1 + tol) / self.k_star:
            raise HypothesisError(
                "permeability",
                f"permeability eigenvalues [{eig.min()}, {eig.max()}] outside "
                f"[{self.k_star}, {1 / self.k_star}]",
            )

    @classmethod
    def uniform(cls, g: Grid, phi: float = 1.0, k: float = 1.0,
                phi_star: float | None = None, k_star: float | None = None) -> "CoefficientFields":
        K = np.zeros(g.shape + (2, 2))
        K[..., 0, 0] = k
        K[..., 1, 1] = k
        return cls(
            np.full(g.shape, float(phi)), K,
            phi_star=phi_star if phi_star is not None else min(phi, 1 / phi),
            k_star=k_star if k_star is not None else min(k, 1 / k),
        )

    @property
    def is_diagonal(self) -> bool:
        return bool(np.all(self.K[..., 0, 1] == 0.0) and np.all(self.K[..., 1, 0] == 0.0))


@dataclass(frozen=True)
class FluidModel:
    mu0: float = 1.0
    M: float = 1.0
    rho0: float = 1.0
    rho1: float = 1.0
    g: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not self.mu0 > 0:
            raise HypothesisError("density-viscosity", f"mu0 must be > 0, got {self.mu0}")
        if not (self.M > 0 and math.isfinite(self.M)):
            raise HypothesisError("density-viscosity", f"mobility ratio M must be > 0, got {self.M}")

    @property
    def has_gravity(self) -> bool:
        return any(gi != 0.0 for gi in self.g)


@dataclass(frozen=True)
class DispersionModel:
    dm: float
    dl: float
    dt: float
    trunc_k: float = math.inf

    def __post_init__(self):
        for name in ("dm", "dl", "dt"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise HypothesisError(
                    "dispersion-ellipticity", f"{name} must be finite and > 0, got {v}"
                )
        if not self.trunc_k > 0:
            raise HypothesisError("dispersion-ellipticity", f"trunc_k must be > 0, got {self.trunc_k}")

    def alpha(self, phi_star: float) -> float:
        """Lower ellipticity constant of the Peaceman tensor."""
        return phi_star * min(self.dm, self.dl, self.dt)

    def lam(self, phi_star: float) -> float:
        """Growth constant of the Peaceman tensor."""
        return max(self.dm, self.dl, self.dt) / phi_star


def _clamp01(c):
    return np.clip(c, 0.0, 1.0)


def viscosity(c, fm: FluidModel):
    """Koval mixing law ``mu0 * (1 + (M**0.25 - 1) c)**-4``."""
    c = _clamp01(np.asarray(c, dtype=float))
    return fm.mu0 * (1.0 + (fm.M ** 0.25 - 1.0) * c) ** -4


def density(c, fm: FluidModel):
    c = _clamp01(np.asarray(c, dtype=float))
    return (1.0 - c) * fm.rho0 + c * fm.rho1


def dispersion_tensor(phi_x, u, dm: DispersionModel) -> np.ndarray:
    """Peaceman diffusion-dispersion tensor.

    ``phi * (dm I + |u| (dl E(u) + dt (I - E(u))))`` with ``E(u) = u u^T / |u|^2``,
    and ``phi * dm * I`` at ``u = 0``.
    """
    u = np.asarray(u, dtype=float)
    phi_x = np.asarray(phi_x, dtype=float)
    speed = np.sqrt(u[..., 0] ** 2 + u[..., 1] ** 2)
    safe = np.where(speed > 0, speed, 1.0)
    # |u| E(u) = u u^T / |u|
    uu = u[..., :, None] * u[..., None, :] / safe[..., None, None]
    uu = np.where((speed > 0)[..., None, None], uu, 0.0)
    eye = np.eye(2)
    D = (dm.dm * eye
         + dm.dl * uu
         + dm.dt * (speed[..., None, None] * eye - uu))
    return phi_x[..., None, None] * D


def truncate_velocity(u, k: float) -> np.ndarray:
    """Keep the direction of ``u`` and cap its magnitude at ``k``."""
    u = np.asarray(u, dtype=float)
    if math.isinf(k):
        return u
    speed = np.sqrt(u[..., 0] ** 2 + u[..., 1] ** 2)
    # below the cap the velocity is passed through untouched (bit-identical)
    scale = np.where(speed > k, k / np.where(speed > 0, speed, 1.0), 1.0)
    return u * scale[..., None]


def dispersion_tensor_truncated(phi_x, u, k: float, dm: DispersionModel) -> np.ndarray:
    if not k > 0:
        raise ValueError(f"truncation level must be > 0, got {k}")
    return dispersion_tensor(phi_x, truncate_velocity(u, k), dm)


def cell_dispersion(phi: np.ndarray, u_cell: np.ndarray, dm: DispersionModel) -> np.ndarray:
    """Tensor field for a run, honouring the model's truncation level."""
    if math.isinf(dm.trunc_k):
        return dispersion_tensor(phi, u_cell, dm)
    return dispersion_tensor_truncated(phi, u_cell, dm.trunc_k, dm)


def tensor_sqrt(D, *, rtol: float = 1e-12) -> np.ndarray:
    """Symmetric positive semi-definite square root of 2x2 tensors.

    Uses ``sqrt(D) = (D + sqrt(det D) I) / sqrt(tr D + 2 sqrt(det D))``.
    """
    D = np.asarray(D, dtype=float)
    scale = np.maximum(np.abs(D).max(axis=(-1, -2)), np.finfo(float).tiny)
    if np.any(np.abs(D[..., 0, 1] - D[..., 1, 0]) > rtol * scale):
        raise ValueError("tensor_sqrt: input is not symmetric")
    tr = D[..., 0, 0] + D[..., 1, 1]
    det = D[..., 0, 0] * D[..., 1, 1] - D[..., 0, 1] * D[..., 1, 0]
    if np.any(tr < -rtol * scale) or np.any(det < -1e3 * rtol * scale**2):
        raise ValueError("tensor_sqrt: input is indefinite")
    sdet = np.sqrt(np.maximum(det, 0.0))
    denom = np.sqrt(np.maximum(tr + 2.0 * sdet, 0.0))
    safe = np.where(denom > 0, denom, 1.0)
    R = (D + sdet[..., None, None] * np.eye(2)) / safe[..., None, None]
    return np.where((denom > 0)[..., None, None], R, 0.0)
