"""Uniform cell-centred rectangular mesh.

Cells are indexed row-major: cell ``(i, j)`` (``i`` along x, ``j`` along y)
has flat index ``j * nx + i``.  Cell fields are stored as ``(ny, nx)`` arrays
so that ``field.ravel()`` matches the flat indexing.

Faces come in two families.  x-faces (normal ``(1, 0)``) live on an
``(ny, nx + 1)`` lattice, y-faces (normal ``(0, 1)``) on ``(ny + 1, nx)``.
The first and last column/row of each family are boundary faces.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    nx: int
    ny: int
    lx: float
    ly: float
    dim: int = field(default=2, repr=False)

    def __post_init__(self):
        # build_grid enforces the >= 2 rule; the bare type also admits
        # degenerate strips (e.g. 2x1) used for hand-checked assemblies.
        if int(self.nx) < 1 or int(self.ny) < 1:
            raise GridError(f"cell counts must be positive, got {self.nx}x{self.ny}")
        if not (self.lx > 0 and self.ly > 0):
            raise GridError(f"domain extents must be > 0, got {self.lx}x{self.ly}")
        if self.dim != 2:
            raise GridError("only two-dimensional grids are implemented")

    @property
    def hx(self) -> float:
        return self.lx / self.nx

    @property
    def hy(self) -> float:
        return self.ly / self.ny

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def cell_volume(self) -> float:
        return self.hx * self.hy

    @property
    def volumes(self) -> np.ndarray:
        return np.full(self.shape, self.cell_volume)

    @property
    def area_x(self) -> float:
        """Length of an x-face (a vertical edge)."""
        return self.hy

    @property
    def area_y(self) -> float:
        return self.hx

    @property
    def xc(self) -> np.ndarray:
        return (np.arange(self.nx) + 0.5) * self.hx

    @property
    def yc(self) -> np.ndarray:
        return (np.arange(self.ny) + 0.5) * self.hy

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(X, Y)`` arrays of shape ``(ny, nx)``."""
        return np.meshgrid(self.xc, self.yc)

    def x_face_centers(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(np.arange(self.nx + 1) * self.hx, self.yc)

    def y_face_centers(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.xc, np.arange(self.ny + 1) * self.hy)

    def index(self, i: int, j: int) -> int:
        return j * self.nx + i

    def interior_x_faces(self) -> tuple[np.ndarray, np.ndarray]:
        """Flat (left, right) cell indices of interior x-faces, in ``(ny, nx-1)`` order."""
        idx = np.arange(self.n_cells).reshape(self.shape)
        return idx[:, :-1].ravel(), idx[:, 1:].ravel()

    def interior_y_faces(self) -> tuple[np.ndarray, np.ndarray]:
        idx = np.arange(self.n_cells).reshape(self.shape)
        return idx[:-1, :].ravel(), idx[1:, :].ravel()

    def n_faces(self) -> tuple[int, int]:
        """Numbers of (x-faces, y-faces) including boundary faces."""
        return self.ny * (self.nx + 1), (self.ny + 1) * self.nx

    def contains(self, x: float, y: float) -> bool:
        return 0.0 <= x <= self.lx and 0.0 <= y <= self.ly


def build_grid(nx: int, ny: int, lx: float, ly: float) -> Grid:
    if int(nx) != nx or int(ny) != ny:
        raise GridError("cell counts must be integers")
    if nx < 2 or ny < 2:
        raise GridError(f"need at least 2 cells per axis, got {nx}x{ny}")
    if not (lx > 0 and ly > 0):
        raise GridError(f"domain extents must be > 0, got {lx}x{ly}")
    return Grid(int(nx), int(ny), float(lx), float(ly))


def cell_of_point(g: Grid, x: tuple[float, float]) -> int:
    """Flat index of the half-open cell box containing ``x``.

    Points on the upper boundary of an axis belong to the last cell of that axis.
    """
    px, py = float(x[0]), float(x[1])
    if not g.contains(px, py):
        raise GridError(f"point ({px}, {py}) outside [0, {g.lx}] x [0, {g.ly}]")
    i = min(int(np.floor(px / g.hx)), g.nx - 1)
    j = min(int(np.floor(py / g.hy)), g.ny - 1)
    return g.index(i, j)


@dataclass(frozen=True)
class FaceField:
    """Normal fluxes through all faces, oriented along +x / +y.

    ``x`` has shape ``(ny, nx + 1)`` and ``y`` shape ``(ny + 1, nx)``;
    boundary entries are kept so that no-flow can be checked directly.
    """

    x: np.ndarray
    y: np.ndarray

    @classmethod
    def zeros(cls, g: Grid) -> "FaceField":
        return cls(np.zeros((g.ny, g.nx + 1)), np.zeros((g.ny + 1, g.nx)))

    def max_abs(self) -> float:
        return float(max(np.abs(self.x).max(initial=0.0), np.abs(self.y).max(initial=0.0)))

    def boundary_max_abs(self) -> float:
        return float(max(np.abs(self.x[:, [0, -1]]).max(), np.abs(self.y[[0, -1], :]).max()))

    def divergence(self, g: Grid) -> np.ndarray:
        """Net outflow of every cell (flux units, not divided by volume)."""
        return (self.x[:, 1:] - self.x[:, :-1]) + (self.y[1:, :] - self.y[:-1, :])
