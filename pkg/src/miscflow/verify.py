"""Invariant audits, manufactured-solution convergence and parameter sweeps."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .fields import CoefficientFields, DispersionModel, FluidModel
from .grid import FaceField, Grid, build_grid
from .linalg import solve_bicgstab
from .pressure import assemble_pressure, solve_pressure
from .transport import Model, SimState, assemble_transport, simulate, weighted_l2sq

MAX_PRINCIPLE_TOL = 1e-10
ENERGY_RTOL = 1e-8
COMPAT_TOL = 1e-13

REPORT_COLUMNS = (
    "step", "time", "c_min", "c_max", "mass_residual_rel", "energy_lhs", "energy_rhs",
    "sqrt_form_sum", "compat_residual", "dtc_norm", "max_speed", "theta_min", "lam",
)


@dataclass
class InvariantReport:
    rows: list[dict]
    checks: dict[str, bool]
    details: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def failures(self) -> list[str]:
        return [k for k, ok in self.checks.items() if not ok]

    def summary(self) -> str:
        return "\n".join(f"{'PASS' if ok else 'FAIL'}  {name}" for name, ok in self.checks.items())

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(REPORT_COLUMNS)
            for r in self.rows:
                w.writerow([format(r[k], ".17g") if isinstance(r[k], float) else r[k]
                            for k in REPORT_COLUMNS])
        return path


def audit_run(history: Sequence[SimState], model: Model, *,
              mass_tol: float | None = None) -> InvariantReport:
    """Evaluate the discrete invariants over a complete run.

    The energy bound on the right-hand side uses data only: the initial
    weighted norm, the sup of the (corrected) rates and the total well mass.
    """
    g = model.grid
    phi = model.coeffs.phi
    if mass_tol is None:
        mass_tol = 10.0 * model.settings.transport_tol
    c0 = history[0].c
    e0 = 0.5 * weighted_l2sq(g, phi, c0)
    diags = [s.diag for s in history[1:]]
    a_sup = max((d.a_max for d in diags), default=0.0)
    b_sup = max((d.b_max for d in diags), default=0.0)
    nu_mass = model.wells.total_mass

    rows = []
    ok_range = bool(c0.min() >= -MAX_PRINCIPLE_TOL and c0.max() <= 1 + MAX_PRINCIPLE_TOL)
    ok_mass = ok_energy = ok_sqrt = ok_compat = True
    dissipation = sqrt_sum = 0.0
    worst_mass = worst_energy = worst_compat = 0.0
    for d in diags:
        dissipation += d.dissipation
        sqrt_sum += d.sqrt_form
        lhs = d.energy + dissipation
        rhs = e0 + (a_sup + b_sup) * nu_mass * d.time
        ok_range &= d.c_min >= -MAX_PRINCIPLE_TOL and d.c_max <= 1 + MAX_PRINCIPLE_TOL
        ok_mass &= d.mass_residual_rel <= mass_tol
        ok_energy &= lhs <= rhs + ENERGY_RTOL * rhs
        ok_sqrt &= sqrt_sum <= rhs + ENERGY_RTOL * rhs
        ok_compat &= d.compat_residual <= COMPAT_TOL
        worst_mass = max(worst_mass, d.mass_residual_rel)
        worst_energy = max(worst_energy, lhs / rhs if rhs > 0 else 0.0)
        worst_compat = max(worst_compat, d.compat_residual)
        rows.append({
            "step": d.step, "time": d.time, "c_min": d.c_min, "c_max": d.c_max,
            "mass_residual_rel": d.mass_residual_rel, "energy_lhs": lhs, "energy_rhs": rhs,
            "sqrt_form_sum": sqrt_sum, "compat_residual": d.compat_residual,
            "dtc_norm": d.dtc_norm, "max_speed": d.max_speed, "theta_min": d.theta,
            "lam": d.lam,
        })
    dtc = [d.dtc_norm for d in diags]
    checks = {
        "max_principle": bool(ok_range),
        "mass_balance": bool(ok_mass),
        "energy_estimate": bool(ok_energy),
        "sqrt_dispersion_bound": bool(ok_sqrt),
        "compatibility": bool(ok_compat),
        "time_increment_bounded": bool(all(math.isfinite(v) for v in dtc)),
    }
    details = {
        "worst_mass_residual_rel": worst_mass,
        "worst_energy_ratio": worst_energy,
        "worst_compat_residual": worst_compat,
        "max_dtc_norm": max(dtc, default=0.0),
        "initial_energy": e0,
    }
    return InvariantReport(rows, checks, details)


# --------------------------------------------------------------------------
# sweeps


@dataclass
class SweepReport:
    parameter: str
    values: list[float]
    snapshots: list[dict] = field(repr=False)
    diffs: dict[str, list[float]] = field(default_factory=dict)
    orders: dict[str, list[float]] = field(default_factory=dict)
    flags: dict[str, bool] = field(default_factory=dict)
    reference: dict | None = field(default=None, repr=False)
    max_speed: float | None = None

    @property
    def passed(self) -> bool:
        return all(self.flags.values())

    def to_csv(self, path: str | Path) -> Path:
        """One row per level; diff/order columns refer to the step from the previous level."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        dkeys = sorted(self.diffs)
        okeys = sorted(self.orders)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["level", self.parameter] + [f"diff_{k}" for k in dkeys]
                       + [f"order_{k}" for k in okeys])
            for i, v in enumerate(self.values):
                row = [i, format(float(v), ".17g")]
                for k in dkeys:
                    row.append(format(self.diffs[k][i - 1], ".17g") if i >= 1 else "")
                for k in okeys:
                    row.append(format(self.orders[k][i - 2], ".17g") if i >= 2 else "")
                w.writerow(row)
        return path


def observed_orders(errors: Sequence[float], ratios: Sequence[float] | float = 2.0) -> list[float]:
    """``log(e_i / e_{i+1}) / log(ratio)`` for consecutive levels."""
    if len(errors) < 2:
        return []
    if isinstance(ratios, (int, float)):
        ratios = [ratios] * (len(errors) - 1)
    return [math.log(errors[i] / errors[i + 1]) / math.log(ratios[i])
            for i in range(len(errors) - 1)]


def _l2(g: Grid, v: np.ndarray) -> float:
    return math.sqrt(float(np.sum(v * v)) * g.cell_volume)


def _strictly_decreasing(seq: Sequence[float]) -> bool:
    return all(b < a for a, b in zip(seq, seq[1:]))


def _non_increasing(seq: Sequence[float]) -> bool:
    return all(b <= a for a, b in zip(seq, seq[1:]))


def _final(job):
    model, c0, T, dt = job
    hist = simulate(model, c0, T, dt)
    last = hist[-1]
    return {
        "c": last.c, "p": last.p,
        "max_speed": max(s.diag.max_speed for s in hist[1:]),
        "p_history": [s.p for s in hist],
    }


def _run_all(jobs, n_jobs: int):
    if n_jobs <= 1 or len(jobs) <= 1:
        return [_final(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n_jobs) as ex:
        return list(ex.map(_final, jobs))


def off_well_mask(g: Grid, model: Model, r0: float) -> np.ndarray:
    """Cells whose centre is farther than ``r0`` (max-norm) from every atom."""
    X, Y = g.cell_centers()
    mask = np.ones(g.shape, dtype=bool)
    for w in model.wells.wells:
        mask &= np.maximum(np.abs(X - w.x), np.abs(Y - w.y)) > r0
    return mask


def _gradient_diff(g: Grid, p1: np.ndarray, p2: np.ndarray, mask: np.ndarray) -> float:
    d = p1 - p2
    gx = (d[:, 1:] - d[:, :-1]) / g.hx
    gy = (d[1:, :] - d[:-1, :]) / g.hy
    mx = mask[:, 1:] & mask[:, :-1]
    my = mask[1:, :] & mask[:-1, :]
    # each face family is weighted by its diamond area
    s = 0.5 * g.hx * g.hy * (np.sum(gx[mx] ** 2) + np.sum(gy[my] ** 2))
    return math.sqrt(float(s))


def regularization_sweep(model: Model, c0, T: float, dt: float, eps_list: Sequence[float],
                         *, r0: float | None = None, jobs: int = 1) -> SweepReport:
    """Run the same problem for each mollification radius (descending, last may be 0)."""
    g = model.grid
    h = max(g.hx, g.hy)
    eps_list = [float(e) for e in eps_list]
    if len(eps_list) < 3:
        raise ValueError("need at least three mollification radii")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("mollification radii must be strictly descending")
    for e in eps_list:
        if e != 0.0 and e < 2.0 * h * (1 - 1e-12):
            raise ValueError(f"epsilon {e} is under-resolved on a grid of width {h}")
    r0 = 4.0 * h if r0 is None else r0
    models = [model.with_(wells=model.wells.with_epsilon(e)) for e in eps_list]
    results = _run_all([(m, c0, T, dt) for m in models], jobs)
    mask = off_well_mask(g, model, r0)

    dc, dp, dgp = [], [], []
    for r1, r2 in zip(results, results[1:]):
        dc.append(_l2(g, r2["c"] - r1["c"]))
        diff_p = np.where(mask, r2["p"] - r1["p"], 0.0)
        dp.append(_l2(g, diff_p))
        dgp.append(_gradient_diff(g, r2["p"], r1["p"], mask))
    flags = {
        "c_cauchy_decrease": _strictly_decreasing(dc),
        "grad_p_cauchy_decrease": _strictly_decreasing(dgp),
    }
    return SweepReport("epsilon", eps_list, results,
                       {"c": dc, "p_offwell": dp, "grad_p_offwell": dgp}, {}, flags)


def truncation_sweep(model: Model, c0, T: float, dt: float, k_list: Sequence[float],
                     *, jobs: int = 1) -> SweepReport:
    """Compare truncated-tensor runs (ascending ``k``) with the untruncated run."""
    k_list = [float(k) for k in k_list]
    if len(k_list) < 2:
        raise ValueError("need at least two truncation levels")
    if any(b <= a for a, b in zip(k_list, k_list[1:])):
        raise ValueError("truncation levels must be strictly ascending")
    base = model.with_(dispersion=_with_k(model, math.inf))
    models = [base] + [model.with_(dispersion=_with_k(model, k)) for k in k_list]
    results = _run_all([(m, c0, T, dt) for m in models], jobs)
    ref = results[0]
    u_max = ref["max_speed"]
    g = model.grid
    diffs = [_l2(g, r["c"] - ref["c"]) for r in results[1:]]
    above = [i for i, k in enumerate(k_list) if k >= u_max]
    below = [diffs[i] for i, k in enumerate(k_list) if k < u_max]
    flags = {
        "identical_above_speed": all(np.array_equal(results[i + 1]["c"], ref["c"]) for i in above),
        "non_increasing_below_speed": _non_increasing(below),
    }
    return SweepReport("k", k_list, results[1:], {"c_vs_untruncated": diffs}, {}, flags,
                       reference=ref, max_speed=u_max)


def _with_k(model: Model, k: float) -> DispersionModel:
    return replace(model.dispersion, trunc_k=k)


# --------------------------------------------------------------------------
# manufactured solutions


def _pressure_case(n: int) -> float:
    g = build_grid(n, n, 1.0, 1.0)
    X, Y = g.cell_centers()
    exact = np.cos(np.pi * X) * np.cos(np.pi * Y)
    src = 2.0 * np.pi ** 2 * exact
    cf = CoefficientFields.uniform(g)
    sys = assemble_pressure(g, cf, FluidModel(), np.zeros(g.shape), src)
    p = solve_pressure(sys, tol=1e-13)
    return _l2(g, p - (exact - exact.mean()))


def stream_fluxes(g: Grid, psi) -> FaceField:
    """Face fluxes of the velocity ``(psi_y, -psi_x)``: exactly divergence-free."""
    xn = np.arange(g.nx + 1) * g.hx
    yn = np.arange(g.ny + 1) * g.hy
    XN, YN = np.meshgrid(xn, yn)
    P = psi(XN, YN)
    U = FaceField.zeros(g)
    U.x[:, 1:-1] = (P[1:, 1:-1] - P[:-1, 1:-1])
    U.y[1:-1, :] = -(P[1:-1, 1:] - P[1:-1, :-1])
    return U


class RotatingFlowCase:
    """Concentration ``0.5 + 0.25 e^{-t} cos(pi x) cos(pi y)`` in a cellular flow.

    The velocity ``U0 (sin(pi x) cos(pi y), -cos(pi x) sin(pi y))`` is
    divergence-free and tangential on the boundary; dispersion is ``d I``.
    """

    def __init__(self, U0: float = 1.0, d: float = 0.05):
        self.U0 = U0
        self.d = d

    def exact(self, X, Y, t):
        return 0.5 + 0.25 * np.exp(-t) * np.cos(np.pi * X) * np.cos(np.pi * Y)

    def psi(self, X, Y):
        return self.U0 * np.sin(np.pi * X) * np.sin(np.pi * Y) / np.pi

    def forcing(self, X, Y, t):
        cx, cy = np.cos(np.pi * X), np.cos(np.pi * Y)
        sx, sy = np.sin(np.pi * X), np.sin(np.pi * Y)
        adv = self.U0 * np.pi * (cx ** 2 * sy ** 2 - sx ** 2 * cy ** 2)
        return 0.25 * np.exp(-t) * (-cx * cy + adv + 2.0 * np.pi ** 2 * self.d * cx * cy)

    def solve(self, n: int, T: float, n_steps: int) -> tuple[Grid, np.ndarray]:
        g = build_grid(n, n, 1.0, 1.0)
        X, Y = g.cell_centers()
        U = stream_fluxes(g, self.psi)
        D = np.zeros(g.shape + (2, 2))
        D[..., 0, 0] = D[..., 1, 1] = self.d
        phi = np.ones(g.shape)
        zero = np.zeros(g.shape)
        c = self.exact(X, Y, 0.0)
        dt = T / n_steps
        for k in range(n_steps):
            t1 = (k + 1) * dt
            ts = assemble_transport(g, phi, D, U, c, zero, zero, dt,
                                    forcing=self.forcing(X, Y, t1))
            c = solve_bicgstab(ts.matrix, ts.rhs, tol=1e-13, x0=c.ravel()).reshape(g.shape)
        return g, c


def manufactured_convergence(case: str, levels: Sequence[int] | None = None) -> SweepReport:
    """Observed L2 orders for ``case`` in {"pressure", "transport", "temporal"}."""
    if case == "pressure":
        levels = list(levels or (8, 16, 32))
        errs = [_pressure_case(n) for n in levels]
        orders = observed_orders(errs, [levels[i + 1] / levels[i] for i in range(len(levels) - 1)])
        return SweepReport("n", levels, [], {"p_error": errs}, {"p": orders},
                           {"order_ge_1.9": len(orders) >= 2 and min(orders) >= 1.9})
    if case == "transport":
        # first-order upwinding is pre-asymptotic below n = 32 on this flow
        levels = list(levels or (32, 64, 128))
        mms = RotatingFlowCase()
        T = 0.5
        errs = []
        for n in levels:
            g, c = mms.solve(n, T, n_steps=n)
            X, Y = g.cell_centers()
            errs.append(_l2(g, c - mms.exact(X, Y, T)))
        orders = observed_orders(errs, [levels[i + 1] / levels[i] for i in range(len(levels) - 1)])
        return SweepReport("n", levels, [], {"c_error": errs}, {"c": orders},
                           {"order_ge_0.9": len(orders) >= 2 and min(orders) >= 0.9})
    if case == "temporal":
        steps = list(levels or (16, 32, 64, 128))
        mms = RotatingFlowCase()
        T, n = 0.5, 32
        sols = [mms.solve(n, T, k) for k in steps]
        g = sols[0][0]
        diffs = [_l2(g, b[1] - a[1]) for a, b in zip(sols, sols[1:])]
        orders = observed_orders(diffs, [steps[i + 1] / steps[i] for i in range(len(steps) - 1)])
        return SweepReport("n_steps", steps, [], {"c_richardson": diffs}, {"c": orders},
                           {"order_ge_0.9": len(orders) >= 1 and min(orders) >= 0.9})
    raise ValueError(f"unknown manufactured case {case!r}")
