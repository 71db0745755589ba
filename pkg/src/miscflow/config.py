"""Run configuration: TOML parsing, validation of the data assumptions, presets.

A configuration is a TOML document with these sections (all optional except
``[grid]`` and ``[time]``)::

    [grid]        nx, ny, lx, ly
    [time]        T, dt
    [porosity]    type = "constant" | "checkerboard" | "table", value/values, phi_star
    [permeability] same types; value may be a scalar or [kx, ky]; k_star
    [fluid]       mu0, M, rho0, rho1, gravity (bool), g = [gx, gy]
    [dispersion]  dm, dl, dt, trunc_k (inf allowed)
    [initial]     type = "constant" | "box" | "table"
    [[wells]]     x, y, weight, role = "inject" | "produce", rate, c_hat
    [regularization] epsilon (length) or epsilon_cells (multiples of the cell width)
    [solver]      pressure_tol, transport_tol, maxit, picard_max, picard_tol
    [output]      cadence, dir

Rates and ``c_hat`` are either numbers or ``[[t0, v0], [t1, v1], ...]``
piecewise-constant tables.
"""

from __future__ import annotations

import copy
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError, HypothesisError
from .fields import CoefficientFields, DispersionModel, FluidModel
from .grid import Grid, GridError, build_grid
from .transport import Model, SolverSettings
from .wells import WellSet, wells_from_records

DEFAULTS: dict[str, dict[str, Any]] = {
    "porosity": {"type": "constant", "value": 1.0},
    "permeability": {"type": "constant", "value": 1.0},
    "fluid": {"mu0": 1.0, "M": 1.0, "rho0": 1.0, "rho1": 1.0, "gravity": False, "g": [0.0, -1.0]},
    "dispersion": {"dm": 1e-3, "dl": 1e-2, "dt": 1e-3, "trunc_k": math.inf},
    "initial": {"type": "constant", "value": 0.0},
    "regularization": {"epsilon": 0.0},
    "solver": {"pressure_tol": 1e-12, "transport_tol": 1e-12, "maxit": None,
               "picard_max": 1, "picard_tol": 1e-8},
    "output": {"cadence": 10, "dir": "out"},
}


@dataclass(frozen=True)
class SimConfig:
    grid: Grid
    T: float
    dt: float
    coeffs: CoefficientFields
    fluid: FluidModel
    dispersion: DispersionModel
    wells: WellSet
    c0: np.ndarray
    settings: SolverSettings
    cadence: int = 10
    out_dir: str = "out"
    raw: dict = field(default_factory=dict, repr=False, compare=False)

    def model(self, **overrides) -> Model:
        m = Model(self.grid, self.coeffs, self.fluid, self.dispersion, self.wells, self.settings)
        return m.with_(**overrides) if overrides else m


def _section(doc: dict, name: str) -> dict:
    merged = dict(DEFAULTS.get(name, {}))
    merged.update(doc.get(name, {}) or {})
    return merged


def _cell_field(g: Grid, spec: dict, what: str) -> np.ndarray:
    kind = spec.get("type", "constant")
    if kind == "constant":
        return np.full(g.shape, float(spec["value"]))
    if kind == "checkerboard":
        v0, v1 = (float(v) for v in spec["values"])
        j, i = np.indices(g.shape)
        return np.where((i + j) % 2 == 0, v0, v1)
    if kind == "table":
        arr = np.asarray(spec["values"], dtype=float)
        if arr.size != g.n_cells:
            raise ConfigError(f"{what} table has {arr.size} entries, grid has {g.n_cells} cells")
        return arr.reshape(g.shape)
    if kind == "box":
        X, Y = g.cell_centers()
        x0, x1 = spec.get("x", [0.0, g.lx])
        y0, y1 = spec.get("y", [0.0, g.ly])
        inside = (X >= x0) & (X <= x1) & (Y >= y0) & (Y <= y1)
        return np.where(inside, float(spec.get("inside", 1.0)), float(spec.get("outside", 0.0)))
    raise ConfigError(f"unknown {what} field type {kind!r}")


def _permeability(g: Grid, spec: dict) -> np.ndarray:
    value = spec.get("value")
    K = np.zeros(g.shape + (2, 2))
    if spec.get("type", "constant") == "constant" and isinstance(value, (list, tuple)):
        kx, ky = (float(v) for v in value)
        K[..., 0, 0], K[..., 1, 1] = kx, ky
        return K
    k = _cell_field(g, spec, "permeability")
    K[..., 0, 0] = k
    K[..., 1, 1] = k
    return K


def build_config(doc: dict) -> SimConfig:
    """Validate a parsed document and assemble the run configuration."""
    doc = copy.deepcopy(doc)
    try:
        gs = doc["grid"]
        g = build_grid(gs["nx"], gs["ny"], float(gs.get("lx", 1.0)), float(gs.get("ly", 1.0)))
    except KeyError as exc:
        raise ConfigError(f"missing grid entry {exc}") from None
    except GridError as exc:
        raise HypothesisError("domain", str(exc)) from None

    ts = doc.get("time")
    if ts is None or "T" not in ts or "dt" not in ts:
        raise ConfigError("[time] needs T and dt")
    T, dt = float(ts["T"]), float(ts["dt"])
    if not (T > 0 and math.isfinite(T)):
        raise HypothesisError("domain", f"final time T must be > 0, got {T}")
    if not dt > 0:
        raise ConfigError(f"time step must be > 0, got {dt}")

    ps = _section(doc, "porosity")
    phi = _cell_field(g, ps, "porosity")
    if not phi.min() > 0:
        raise HypothesisError("porosity", f"porosity must be bounded away from 0, got min {phi.min()}")
    phi_star = float(ps.get("phi_star", min(phi.min(), 1.0 / phi.max())))
    ks = _section(doc, "permeability")
    K = _permeability(g, ks)
    eig = np.linalg.eigvalsh(K)
    if not eig.min() > 0:
        raise HypothesisError("permeability", f"permeability must be positive definite, got {eig.min()}")
    k_star = float(ks.get("k_star", min(eig.min(), 1.0 / eig.max())))
    coeffs = CoefficientFields(phi, K, phi_star=phi_star, k_star=k_star)

    fs = _section(doc, "fluid")
    gvec = tuple(float(v) for v in fs["g"]) if fs.get("gravity") else (0.0, 0.0)
    fluid = FluidModel(float(fs["mu0"]), float(fs["M"]), float(fs["rho0"]), float(fs["rho1"]), gvec)

    ds = _section(doc, "dispersion")
    trunc = ds.get("trunc_k", math.inf)
    trunc = math.inf if trunc in (None, "inf") else float(trunc)
    dispersion = DispersionModel(float(ds["dm"]), float(ds["dl"]), float(ds["dt"]), trunc)

    c0 = _cell_field(g, _section(doc, "initial"), "initial concentration")
    if np.any(c0 < 0) or np.any(c0 > 1):
        raise HypothesisError(
            "initial-concentration",
            f"initial concentration out of [0, 1]: range [{c0.min()}, {c0.max()}]",
        )

    rs = _section(doc, "regularization")
    if "epsilon_cells" in rs:
        eps = float(rs["epsilon_cells"]) * max(g.hx, g.hy)
    else:
        eps = float(rs.get("epsilon", 0.0))
    if eps < 0:
        raise ConfigError(f"epsilon must be >= 0, got {eps}")
    records = doc.get("wells", []) or []
    try:
        for rec in records:
            if not g.contains(float(rec["x"]), float(rec["y"])):
                raise HypothesisError("well-rates",
                                      f"well at ({rec['x']}, {rec['y']}) outside the domain")
        wells = wells_from_records(records, eps)
    except KeyError as exc:
        raise ConfigError(f"well record missing {exc}") from None
    except HypothesisError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad well record: {exc}") from None

    ss = _section(doc, "solver")
    settings = SolverSettings(
        pressure_tol=float(ss["pressure_tol"]),
        transport_tol=float(ss["transport_tol"]),
        maxit=None if ss.get("maxit") is None else int(ss["maxit"]),
        picard_max=int(ss["picard_max"]),
        picard_tol=float(ss["picard_tol"]),
    )
    os_ = _section(doc, "output")
    return SimConfig(g, T, dt, coeffs, fluid, dispersion, wells, c0, settings,
                     int(os_["cadence"]), str(os_["dir"]), doc)


def parse_config(text: str) -> SimConfig:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse configuration: {exc}") from None
    return build_config(doc)


def load_config(path: str | Path) -> SimConfig:
    return parse_config(Path(path).read_text())


def quarter_five_spot(n: int = 16, *, gravity: bool = False, T: float = 0.2,
                      dt: float = 0.005, epsilon_cells: float = 0.0) -> dict:
    """Injector and producer at the centres of opposite corner cells of the unit square."""
    h = 1.0 / n
    doc = {
        "grid": {"nx": n, "ny": n, "lx": 1.0, "ly": 1.0},
        "time": {"T": T, "dt": dt},
        "porosity": {"type": "constant", "value": 0.2, "phi_star": 0.2},
        "permeability": {"type": "constant", "value": 1.0},
        "fluid": {"mu0": 1.0, "M": 4.0, "rho0": 1.0, "rho1": 1.0},
        "dispersion": {"dm": 1e-3, "dl": 1e-2, "dt": 1e-3},
        "initial": {"type": "constant", "value": 0.0},
        "wells": [
            {"x": 0.5 * h, "y": 0.5 * h, "weight": 1.0, "role": "inject", "rate": 1.0, "c_hat": 1.0},
            {"x": 1.0 - 0.5 * h, "y": 1.0 - 0.5 * h, "weight": 1.0, "role": "produce", "rate": 1.0},
        ],
        "regularization": {"epsilon_cells": epsilon_cells},
    }
    if gravity:
        doc["fluid"].update({"rho1": 0.8, "gravity": True, "g": [0.0, -1.0]})
    return doc


def equilibrium(n: int = 16, *, T: float = 1.0, dt: float = 0.01) -> dict:
    """No wells, uniform concentration and density, gravity on: nothing should move."""
    return {
        "grid": {"nx": n, "ny": n, "lx": 1.0, "ly": 1.0},
        "time": {"T": T, "dt": dt},
        "porosity": {"type": "constant", "value": 0.2, "phi_star": 0.2},
        "fluid": {"mu0": 1.0, "M": 4.0, "rho0": 1.0, "rho1": 1.0, "gravity": True, "g": [0.0, -9.81]},
        "initial": {"type": "constant", "value": 0.5},
    }


PRESETS = {
    "equilibrium": lambda n=16: equilibrium(n),
    "quarter-five-spot": lambda n=16: quarter_five_spot(n),
    "quarter-five-spot-gravity": lambda n=16: quarter_five_spot(n, gravity=True),
}


def preset(name: str, n: int = 16) -> SimConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return build_config(PRESETS[name](n))
