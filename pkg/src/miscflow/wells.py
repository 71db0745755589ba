"""Measure-valued wells.

The well measure is a finite sum of weighted atoms.  Each atom is either an
injector (rate ``a``, injected concentration ``c_hat``) or a producer (rate
``b``).  On the grid an atom becomes a nonnegative cell density whose
discrete integral equals its weight: a single-cell deposit for ``epsilon = 0``
or a radial tent of radius ``epsilon`` otherwise.

With per-atom densities ``nu_k`` the rate fields are

    a = sum_{k inj} rate_k nu_k / nu,    b = sum_{k prod} rate_k nu_k / nu,

so that ``q_I = a nu`` and ``q_P = b nu`` hold cellwise.  Total injection
and production are balanced exactly by rescaling ``a``.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import HypothesisError
from .grid import Grid, GridError, cell_of_point

INJECT = "inject"
PRODUCE = "produce"


@dataclass(frozen=True)
class Schedule:
    """Piecewise-constant function of time.

    ``times[i]`` is the start of the interval on which ``values[i]`` holds;
    the first value also applies before ``times[0]``.
    """

    times: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.times) != len(self.values) or not self.times:
            raise ValueError("schedule needs matching, non-empty times and values")
        if any(t1 <= t0 for t0, t1 in zip(self.times, self.times[1:])):
            raise ValueError("schedule times must be strictly increasing")

    @classmethod
    def constant(cls, v: float) -> "Schedule":
        return cls((0.0,), (float(v),))

    @classmethod
    def from_spec(cls, spec) -> "Schedule":
        """Accept a scalar or a list of ``[t, value]`` pairs."""
        if isinstance(spec, Schedule):
            return spec
        if isinstance(spec, (int, float)):
            return cls.constant(spec)
        pairs = [(float(t), float(v)) for t, v in spec]
        return cls(tuple(t for t, _ in pairs), tuple(v for _, v in pairs))

    def __call__(self, t: float) -> float:
        i = bisect.bisect_right(self.times, t) - 1
        return self.values[max(i, 0)]

    @property
    def max(self) -> float:
        return max(self.values)

    @property
    def min(self) -> float:
        return min(self.values)



@dataclass(frozen=True)
class Well:
    x: float
    y: float
    weight: float
    role: str
    rate: Schedule = Schedule.constant(1.0)
    c_hat: Schedule = Schedule.constant(1.0)

    def __post_init__(self):
        if self.role not in (INJECT, PRODUCE):
            raise ValueError(f"well role must be {INJECT!r} or {PRODUCE!r}, got {self.role!r}")
        if not self.weight > 0:
            raise HypothesisError("well-rates", f"atom weight must be > 0, got {self.weight}")
        if self.rate.min < 0:
            raise HypothesisError("well-rates", f"rates must be >= 0, got min {self.rate.min}")
        if self.c_hat.min < 0 or self.c_hat.max > 1:
            raise HypothesisError(
                "injected-concentration",
                f"c_hat must lie in [0, 1], got [{self.c_hat.min}, {self.c_hat.max}]",
            )


@dataclass(frozen=True)
class WellSet:
    wells: tuple[Well, ...] = ()
    epsilon: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "wells", tuple(self.wells))
        if not self.epsilon >= 0:
            raise ValueError(f"mollification radius must be >= 0, got {self.epsilon}")

    @property
    def total_mass(self) -> float:
        return math.fsum(w.weight for w in self.wells)

    @property
    def injectors(self) -> list[Well]:
        return [w for w in self.wells if w.role == INJECT]

    @property
    def producers(self) -> list[Well]:
        return [w for w in self.wells if w.role == PRODUCE]

    def with_epsilon(self, eps: float) -> "WellSet":
        return WellSet(self.wells, eps)


@dataclass(frozen=True)
class RegularizedMeasure:
    """Per-atom cell densities ``atoms[k]`` (shape ``(n_atoms, ny, nx)``)."""

    atoms: np.ndarray
    cell_volume: float

    @property
    def density(self) -> np.ndarray:
        if len(self.atoms) == 0:
            return np.zeros(self.atoms.shape[1:])
        return self.atoms.sum(axis=0)

    def mass(self) -> float:
        return float(self.density.sum() * self.cell_volume)


def _atom_density(g: Grid, w: Well, eps: float) -> np.ndarray:
    if not g.contains(w.x, w.y):
        raise GridError(f"well at ({w.x}, {w.y}) lies outside the domain")
    out = np.zeros(g.shape)
    if eps > 0:
        X, Y = g.cell_centers()
        r = np.hypot(X - w.x, Y - w.y)
        inside = r < eps
        kern = np.zeros(g.shape)
        kern[inside] = 1.0 - r[inside] / eps
        total = kern.sum() * g.cell_volume
        if total > 0:
            # renormalise: clipped support near the boundary keeps full mass
            return kern * (w.weight / total)
    # atomic deposit (also the fallback when no cell centre is within eps)
    k = cell_of_point(g, (w.x, w.y))
    out.flat[k] = w.weight / g.cell_volume
    return out


def regularize_measure(w: WellSet, g: Grid) -> RegularizedMeasure:
    """Spread every atom over the grid.

    The result is nonnegative and each atom keeps its weight as discrete mass.
    """
    atoms = np.array([_atom_density(g, well, w.epsilon) for well in w.wells]).reshape(
        (len(w.wells),) + g.shape
    )
    return RegularizedMeasure(atoms, g.cell_volume)


def raw_rate_fields(w: WellSet, nu: RegularizedMeasure, t: float):
    """Uncorrected ``(a, b, c_hat)`` cell fields at time ``t``."""
    shape = nu.atoms.shape[1:]
    q_inj = np.zeros(shape)
    q_prod = np.zeros(shape)
    q_chat = np.zeros(shape)
    for well, dens in zip(w.wells, nu.atoms):
        r = well.rate(t)
        if well.role == INJECT:
            q_inj += r * dens
            q_chat += well.c_hat(t) * r * dens
        else:
            q_prod += r * dens
    total = nu.density
    pos = total > 0
    safe = np.where(pos, total, 1.0)
    a = np.where(pos, q_inj / safe, 0.0)
    b = np.where(pos, q_prod / safe, 0.0)
    qpos = q_inj > 0
    c_hat = np.where(qpos, q_chat / np.where(qpos, q_inj, 1.0), 0.0)
    return a, b, np.clip(c_hat, 0.0, 1.0)


def compatibility_factor(a: np.ndarray, b: np.ndarray, nu: np.ndarray, vol: float) -> float:
    """Scale for ``a`` that balances discrete injection against production."""
    inj = math.fsum((a * nu).ravel()) * vol
    prod = math.fsum((b * nu).ravel()) * vol
    if inj > 0:
        return prod / inj
    if prod > 0:
        raise HypothesisError(
            "compatibility", "production without any injection cannot be balanced"
        )
    return 1.0


def correct_rates(a: np.ndarray, b: np.ndarray, nu: np.ndarray, vol: float):
    lam = compatibility_factor(a, b, nu, vol)
    return lam * a, b, lam


def corrected_rates(w: WellSet, nu: RegularizedMeasure, t: float):
    """Return ``(a_eff, b_eff)`` with exactly balanced discrete integrals."""
    a, b, _ = raw_rate_fields(w, nu, t)
    a_eff, b_eff, _ = correct_rates(a, b, nu.density, nu.cell_volume)
    return a_eff, b_eff


@dataclass(frozen=True)
class WellSources:
    """Everything the flow and transport solves need from the wells at one time."""

    nu: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c_hat: np.ndarray
    lam: float

    @property
    def q_inj(self) -> np.ndarray:
        return self.a * self.nu

    @property
    def q_prod(self) -> np.ndarray:
        return self.b * self.nu


def well_sources(w: WellSet, nu: RegularizedMeasure, t: float) -> WellSources:
    a, b, c_hat = raw_rate_fields(w, nu, t)
    a_eff, b_eff, lam = correct_rates(a, b, nu.density, nu.cell_volume)
    return WellSources(nu.density, a_eff, b_eff, c_hat, lam)


def source_fields(w: WellSet, g: Grid, t: float, nu: RegularizedMeasure | None = None):
    """Cellwise ``(q_I, q_P)`` after compatibility correction."""
    if nu is None:
        nu = regularize_measure(w, g)
    src = well_sources(w, nu, t)
    return src.q_inj, src.q_prod


def wells_from_records(records: Sequence[dict], epsilon: float = 0.0) -> WellSet:
    """Build a WellSet from ``{x, y, weight, role, rate, c_hat}`` mappings."""
    wells = []
    for rec in records:
        wells.append(Well(
            x=float(rec["x"]), y=float(rec["y"]),
            weight=float(rec.get("weight", 1.0)),
            role=str(rec["role"]),
            rate=Schedule.from_spec(rec.get("rate", 1.0)),
            c_hat=Schedule.from_spec(rec.get("c_hat", 1.0)),
        ))
    return WellSet(tuple(wells), epsilon)
