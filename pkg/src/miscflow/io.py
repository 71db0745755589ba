"""Field snapshots: legacy-VTK structured points plus a CSV twin.

Floats are written with 17 significant digits so that reading the CSV back
reproduces the stored doubles exactly.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .grid import Grid
from .transport import SimState

CSV_COLUMNS = ("i", "j", "x", "y", "c", "p", "ux", "uy")


def _f(v: float) -> str:
    return format(float(v), ".17g")


def write_fields(state: SimState, path: str | Path, grid: Grid) -> tuple[Path, Path]:
    """Write ``<path>.vtk`` and ``<path>.csv``; returns both paths."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    vtk_path = path.with_suffix(".vtk")
    csv_path = path.with_suffix(".csv")
    c = np.asarray(state.c).ravel()
    p = np.asarray(state.p).ravel()
    ux = state.u_cell[..., 0].ravel()
    uy = state.u_cell[..., 1].ravel()

    lines = [
        "# vtk DataFile Version 3.0",
        f"miscflow step {state.step} time {_f(state.time)}",
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        f"DIMENSIONS {grid.nx + 1} {grid.ny + 1} 1",
        "ORIGIN 0 0 0",
        f"SPACING {_f(grid.hx)} {_f(grid.hy)} 1",
        f"CELL_DATA {grid.n_cells}",
    ]
    for name, arr in (("c", c), ("p", p)):
        lines.append(f"SCALARS {name} double 1")
        lines.append("LOOKUP_TABLE default")
        lines.extend(_f(v) for v in arr)
    lines.append("VECTORS u double")
    lines.extend(f"{_f(a)} {_f(b)} 0" for a, b in zip(ux, uy))
    vtk_path.write_text("\n".join(lines) + "\n")

    X, Y = grid.cell_centers()
    J, I = np.indices(grid.shape)
    with csv_path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for k in range(grid.n_cells):
            w.writerow([I.flat[k], J.flat[k], _f(X.flat[k]), _f(Y.flat[k]),
                        _f(c[k]), _f(p[k]), _f(ux[k]), _f(uy[k])])
    return vtk_path, csv_path


def read_fields_csv(path: str | Path) -> dict[str, np.ndarray]:
    """Read a CSV snapshot back into ``(ny, nx)`` arrays keyed by column name."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    i = np.array([int(r["i"]) for r in rows])
    j = np.array([int(r["j"]) for r in rows])
    shape = (j.max() + 1, i.max() + 1)
    out = {}
    for name in CSV_COLUMNS[2:]:
        arr = np.empty(shape)
        arr[j, i] = [float(r[name]) for r in rows]
        out[name] = arr
    return out


def snapshot_steps(n_steps: int, cadence: int) -> list[int]:
    """Steps at which snapshots are written: every ``cadence`` steps plus the last."""
    if cadence < 1:
        raise ValueError("cadence must be >= 1")
    steps = list(range(0, n_steps + 1, cadence))
    if steps[-1] != n_steps:
        steps.append(n_steps)
    return steps
