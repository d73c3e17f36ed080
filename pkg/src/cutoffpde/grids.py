"""Uniform Cartesian grids, nodal fields, and the discrete norms built on them.

Grids are node-centered: a 1D grid with ``n_cells`` cells on [a, b] carries
``n_cells + 1`` nodes x_j = a + j*h, h = (b - a)/n_cells.  2D grids are tensor
products with nodes stored flat in row-major order (y outer, x inner), i.e.
the value at (x_i, y_j) sits at flat index ``j*(nx_cells+1) + i``.

All integral quantities (l2_norm, mass) use trapezoidal weights, so boundary
nodes carry half weight (quarter weight at 2D corners).  This is the single
quadrature convention used everywhere in the package; conservation statements
for the flux-form operators are exact with respect to these weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np


@dataclass(frozen=True)
class Grid1D:
    """Uniform grid on [a, b] with n_cells cells and n_cells + 1 nodes."""

    a: float
    b: float
    n_cells: int

    def __post_init__(self):
        if not (np.isfinite(self.a) and np.isfinite(self.b)):
            raise ValueError("grid endpoints must be finite")
        if not self.b > self.a:
            raise ValueError(f"grid needs b > a, got [{self.a}, {self.b}]")
        if self.n_cells < 2:
            raise ValueError(f"grid needs at least 2 cells, got {self.n_cells}")

    @property
    def h(self) -> float:
        return (self.b - self.a) / self.n_cells

    @property
    def node_count(self) -> int:
        return self.n_cells + 1

    def nodes(self) -> np.ndarray:
        return np.linspace(self.a, self.b, self.n_cells + 1)


@dataclass(frozen=True)
class Grid2D:
    """Tensor-product grid on [ax, bx] x [ay, by], row-major node ordering."""

    ax: float
    bx: float
    nx_cells: int
    ay: float
    by: float
    ny_cells: int

    def __post_init__(self):
        # reuse the 1D validation per axis
        Grid1D(self.ax, self.bx, self.nx_cells)
        Grid1D(self.ay, self.by, self.ny_cells)

    @classmethod
    def square(cls, a: float, b: float, n_cells: int) -> "Grid2D":
        return cls(a, b, n_cells, a, b, n_cells)

    @property
    def hx(self) -> float:
        return (self.bx - self.ax) / self.nx_cells

    @property
    def hy(self) -> float:
        return (self.by - self.ay) / self.ny_cells

    @property
    def shape(self) -> tuple:
        """(rows, cols) = (ny_cells + 1, nx_cells + 1) of the node lattice."""
        return (self.ny_cells + 1, self.nx_cells + 1)

    @property
    def node_count(self) -> int:
        return (self.nx_cells + 1) * (self.ny_cells + 1)

    def x_nodes(self) -> np.ndarray:
        return np.linspace(self.ax, self.bx, self.nx_cells + 1)

    def y_nodes(self) -> np.ndarray:
        return np.linspace(self.ay, self.by, self.ny_cells + 1)

    def node_xy(self) -> tuple:
        """Flat (x, y) coordinate arrays in storage order."""
        xs = self.x_nodes()
        ys = self.y_nodes()
        return np.tile(xs, self.ny_cells + 1), np.repeat(ys, self.nx_cells + 1)


Grid = Union[Grid1D, Grid2D]


@dataclass(frozen=True)
class Field:
    """Nodal values bound to their grid.

    Fields from different grids must never be combined; arithmetic checks
    this.  Values may be non-finite only in a state explicitly flagged as
    diverged by a stepper; every norm/quadrature routine rejects them.
    """

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1:
            raise ValueError(f"field values must be a flat vector, got shape {vals.shape}")
        if vals.shape[0] != self.grid.node_count:
            raise ValueError(
                f"field has {vals.shape[0]} values for a grid with "
                f"{self.grid.node_count} nodes"
            )
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_function(cls, grid: Grid, fn: Callable) -> "Field":
        """Sample fn on the nodes: fn(x) in 1D, fn(x, y) in 2D (vectorized)."""
        if isinstance(grid, Grid1D):
            return cls(grid, np.asarray(fn(grid.nodes()), dtype=float))
        x, y = grid.node_xy()
        return cls(grid, np.asarray(fn(x, y), dtype=float))

    def reshape2d(self) -> np.ndarray:
        if not isinstance(self.grid, Grid2D):
            raise ValueError("reshape2d requires a 2D grid")
        return self.values.reshape(self.grid.shape)

    def _check_same_grid(self, other: "Field"):
        if self.grid != other.grid:
            raise ValueError("fields live on different grids")

    def __sub__(self, other: "Field") -> "Field":
        self._check_same_grid(other)
        return Field(self.grid, self.values - other.values)

    def __add__(self, other: "Field") -> "Field":
        self._check_same_grid(other)
        return Field(self.grid, self.values + other.values)


def trapezoid_weights(grid: Grid) -> np.ndarray:
    """Quadrature weights per node; sum equals the domain measure."""
    if isinstance(grid, Grid1D):
        w = np.full(grid.node_count, grid.h)
        w[0] *= 0.5
        w[-1] *= 0.5
        return w
    wx = trapezoid_weights(Grid1D(grid.ax, grid.bx, grid.nx_cells))
    wy = trapezoid_weights(Grid1D(grid.ay, grid.by, grid.ny_cells))
    return np.outer(wy, wx).ravel()


def _require_finite(values: np.ndarray, what: str):
    finite = np.isfinite(values)
    if not finite.all():
        i = int(np.argmin(finite))
        raise ValueError(f"{what} has non-finite value {values[i]!r} at node {i}")


def l2_norm(e: Field) -> float:
    """Trapezoid-weighted discrete L2 norm, sqrt(sum_j w_j e_j^2)."""
    _require_finite(e.values, "l2_norm argument")
    w = trapezoid_weights(e.grid)
    return float(math.sqrt(float(w @ (e.values * e.values))))


def max_norm(e: Field) -> float:
    _require_finite(e.values, "max_norm argument")
    return float(np.max(np.abs(e.values))) if e.values.size else 0.0


def max_undershoot(f: Field) -> float:
    """max(0, -min_j f_j); equals the max-norm distance between f and its
    nonnegative cutoff."""
    _require_finite(f.values, "max_undershoot argument")
    return float(max(0.0, -float(np.min(f.values))))


def mass(f: Field) -> float:
    """Trapezoidal approximation of the integral of f over the domain."""
    _require_finite(f.values, "mass argument")
    return float(trapezoid_weights(f.grid) @ f.values)


def domain_measure(grid: Grid) -> float:
    if isinstance(grid, Grid1D):
        return grid.b - grid.a
    return (grid.bx - grid.ax) * (grid.by - grid.ay)


def fd_weights(offsets, derivative: int) -> np.ndarray:
    """Finite-difference weights on integer node offsets for a derivative.

    Solves the Vandermonde exactness conditions sum_k w_k o_k^m = m! delta_{m,d}
    for m = 0..len(offsets)-1; the caller divides by h**derivative.
    """
    offs = np.asarray(offsets, dtype=float)
    n = offs.size
    if derivative >= n:
        raise ValueError("need more points than the derivative order")
    vand = np.vander(offs, n, increasing=True).T
    rhs = np.zeros(n)
    rhs[derivative] = math.factorial(derivative)
    return np.linalg.solve(vand, rhs)


# One-sided stencils used at the 2 nodes next to each boundary (2nd order).
_THIRD_LEFT0 = fd_weights([0, 1, 2, 3, 4], 3)
_THIRD_LEFT1 = fd_weights([-1, 0, 1, 2, 3], 3)


def third_derivative(f: Field) -> Field:
    """Second-order discrete third derivative on a 1D grid.

    Interior nodes use the centered stencil
    (f_{j+2} - 2 f_{j+1} + 2 f_{j-1} - f_{j-2}) / (2 h^3),
    the two nodes next to each boundary use one-sided 5-point stencils of the
    same order.
    """
    if not isinstance(f.grid, Grid1D):
        raise ValueError("third_derivative requires a 1D grid")
    if f.grid.n_cells < 4:
        raise ValueError("third_derivative needs at least 4 cells")
    _require_finite(f.values, "third_derivative argument")
    v = f.values
    h3 = f.grid.h ** 3
    out = np.empty_like(v)
    out[2:-2] = (v[4:] - 2.0 * v[3:-1] + 2.0 * v[1:-3] - v[:-4]) / (2.0 * h3)
    out[0] = (_THIRD_LEFT0 @ v[:5]) / h3
    out[1] = (_THIRD_LEFT1 @ v[:5]) / h3
    out[-2] = -(_THIRD_LEFT1 @ v[-5:][::-1]) / h3
    out[-1] = -(_THIRD_LEFT0 @ v[-5:][::-1]) / h3
    return Field(f.grid, out)


def write_field_csv(f: Field, path):
    """One row per node, columns x[,y],value, 17 significant digits."""
    with open(path, "w") as fh:
        if isinstance(f.grid, Grid1D):
            fh.write("x,value\n")
            for x, v in zip(f.grid.nodes(), f.values):
                fh.write(f"{x:.17g},{v:.17g}\n")
        else:
            fh.write("x,y,value\n")
            x, y = f.grid.node_xy()
            for xi, yi, v in zip(x, y, f.values):
                fh.write(f"{xi:.17g},{yi:.17g},{v:.17g}\n")


def read_field_csv(grid: Grid, path) -> Field:
    """Read values written by write_field_csv back onto a known grid."""
    with open(path) as fh:
        header = fh.readline()
        vals = [float(line.rsplit(",", 1)[1]) for line in fh if line.strip()]
    del header
    return Field(grid, np.asarray(vals))
