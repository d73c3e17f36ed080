"""Fourth-order thin-film equation with degenerate mobility.

    u_t + div( f(u) grad(lap u) ) = 0,      f(u) = u^n  (default n = 1/2),

on (-1,1) in 1D and (-1,1)^2 in 2D, with conservative no-flux boundary
conditions (normal derivatives of u and of lap u vanish; both are realized
by even ghost-node reflection).  The initial film

    1D:  u0(x) = 0.8 - cos(pi x) + 0.25 cos(2 pi x)
    2D:  u0(x, y) = g(x) g(y)  with g the 1D profile

is strictly positive but drains to zero in finite time; past that point the
solution develops a flat touching region that persists for a while and then
lifts off again.  The half-power mobility is undefined for negative values,
so runs floor the state to zero between steps and the mobility hard-errors
if it ever sees a negative node.

Optionally the mobility is mollified,

    f_eps(u) = u^4 f(u) / (eps f(u) + u^4),

which agrees with f(u) away from zero, vanishes like u^4/eps near it, and
recovers f as eps -> 0.

Discretization: write the flux as f(u) d(lap u)/dn on cell faces.  With
w = lap_h u (3/5-point Laplacian with reflected ghosts) the face flux in 1D
becomes f_{j+1/2} (w_{j+1} - w_j)/h = f_{j+1/2}
(u_{j+2} - 3 u_{j+1} + 3 u_j - u_{j-1})/h^3; face mobilities are arithmetic
means of the nodal ones evaluated at the previous post-cutoff state (lagged
diffusivity: one matrix and one factorization per step, frozen across the
SDIRK stages).  Node updates divide flux differences by the node's control
volume (half cells at boundaries), which makes the trapezoid-weighted column
sums of the assembled operator vanish and mass exactly conserved up to
solver residual.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .cutoff import CutoffParams
from .grids import Field, Grid1D, Grid2D, trapezoid_weights
from .linalg import SparseMatrix
from .stepping import (
    RunTrace,
    StepperConfig,
    StepRecord,
    DivergenceError,
    _Sdirk3Stepper,
    _floor_values,
)

#: default snapshot cadence (steps) for singularity tracking
SNAPSHOT_EVERY_DEFAULT = 10


@dataclass(frozen=True)
class MobilitySpec:
    """f(u) = u^exponent, optionally mollified by epsilon."""

    exponent: float = 0.5
    epsilon: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.exponent) and self.exponent >= 0.0):
            raise ValueError("mobility exponent must be >= 0")
        if not (np.isfinite(self.epsilon) and self.epsilon >= 0.0):
            raise ValueError("mobility epsilon must be >= 0")


def _default_profile(x):
    return 0.8 - np.cos(np.pi * x) + 0.25 * np.cos(2.0 * np.pi * x)


def default_initial_1d(x):
    """Positive film with minimum 0.05 at x = 0 and mean 0.8."""
    return _default_profile(x)


def default_initial_2d(x, y):
    """Tensor-product film, minimum 0.0025, mean 0.64."""
    return _default_profile(x) * _default_profile(y)


@dataclass(frozen=True)
class LubricationSpec:
    grid: object
    mobility: MobilitySpec = MobilitySpec()
    initial: Optional[Callable] = None

    @classmethod
    def default_1d(cls, n_cells: int = 1000, epsilon: float = 0.0) -> "LubricationSpec":
        return cls(grid=Grid1D(-1.0, 1.0, n_cells),
                   mobility=MobilitySpec(epsilon=epsilon))

    @classmethod
    def default_2d(cls, n_cells: int = 80, epsilon: float = 0.0) -> "LubricationSpec":
        return cls(grid=Grid2D.square(-1.0, 1.0, n_cells),
                   mobility=MobilitySpec(epsilon=epsilon))

    def initial_field(self) -> Field:
        if self.initial is not None:
            return Field.from_function(self.grid, self.initial)
        fn = default_initial_1d if isinstance(self.grid, Grid1D) else default_initial_2d
        return Field.from_function(self.grid, fn)


def mobility(u, spec: MobilitySpec):
    """Nodewise mobility; scalar or array input.  Negative input is a hard
    error naming the offending node (impossible after the cutoff)."""
    vals = np.asarray(u, dtype=float)
    bad = ~np.isfinite(vals) | (vals < 0.0)
    if bad.any():
        i = int(np.argmax(bad))
        v = vals.flat[i] if vals.ndim else vals[()]
        raise ValueError(f"mobility needs finite nonnegative input; node {i} has {v!r}")
    with np.errstate(divide="ignore", invalid="ignore"):
        f = np.where(vals > 0.0, vals ** spec.exponent, 0.0)
        if spec.epsilon > 0.0:
            u4 = vals ** 4
            f = np.where(vals > 0.0, u4 * f / (spec.epsilon * f + u4), 0.0)
    return f if vals.ndim else float(f)


def _laplacian_1d(grid: Grid1D) -> SparseMatrix:
    """3-point Laplacian with even ghost reflection (u_x = 0 at both ends)."""
    n = grid.node_count
    h2 = grid.h ** 2
    main = np.full(n, -2.0 / h2)
    off = np.full(n - 1, 1.0 / h2)
    lap = sp.diags([off, main, off], [-1, 0, 1], format="lil")
    lap[0, 1] = 2.0 / h2
    lap[n - 1, n - 2] = 2.0 / h2
    return SparseMatrix(lap)


def _laplacian_2d(grid: Grid2D) -> SparseMatrix:
    """5-point Laplacian with even reflection on all four sides."""
    lx = _laplacian_1d(Grid1D(grid.ax, grid.bx, grid.nx_cells)).csr
    ly = _laplacian_1d(Grid1D(grid.ay, grid.by, grid.ny_cells)).csr
    ix = sp.identity(grid.nx_cells + 1, format="csr")
    iy = sp.identity(grid.ny_cells + 1, format="csr")
    return SparseMatrix(sp.kron(iy, lx) + sp.kron(ly, ix))


def _flux_divergence_1d(face_mobility: np.ndarray, grid: Grid1D) -> SparseMatrix:
    """w -> (1/vol_j) * [f_{j+1/2}(w_{j+1}-w_j)/h - f_{j-1/2}(w_j-w_{j-1})/h]
    with zero flux through the domain ends and half-cell volumes there."""
    n = grid.node_count
    h = grid.h
    vol = np.full(n, h)
    vol[0] = vol[-1] = 0.5 * h
    c = face_mobility / h  # one entry per interior face j+1/2, j = 0..n-2
    left = np.arange(n - 1)
    right = left + 1
    rows = np.concatenate([left, left, right, right])
    cols = np.concatenate([right, left, right, left])
    vals = np.concatenate([c / vol[left], -c / vol[left], -c / vol[right], c / vol[right]])
    return SparseMatrix.from_coo(n, rows, cols, vals)


def _face_mean(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return 0.5 * (a + b)


def _lagged_face_mobilities_1d(u_lagged: Field, spec: LubricationSpec) -> np.ndarray:
    f = mobility(u_lagged.values, spec.mobility)
    return _face_mean(f[:-1], f[1:])


def assemble_lubrication_1d(u_lagged: Field, spec: LubricationSpec) -> SparseMatrix:
    """Matrix of the linear operator u -> -( f_hat u_xxx )_x with face
    mobilities frozen at the lagged state; pentadiagonal inside, reflected
    ghosts at the ends."""
    grid = spec.grid
    if not isinstance(grid, Grid1D) or u_lagged.grid != grid:
        raise ValueError("lagged state must live on the 1D grid of the spec")
    faces = _lagged_face_mobilities_1d(u_lagged, spec)
    div = _flux_divergence_1d(faces, grid)
    lap = _laplacian_1d(grid)
    return (div @ lap).scaled(-1.0)


def assemble_lubrication_2d(u_lagged: Field, spec: LubricationSpec) -> SparseMatrix:
    """2D analogue: w = lap_h u by the reflected 5-point stencil, face fluxes
    f_face * dw/dn, divergence over node control volumes (quarter cells at
    corners)."""
    grid = spec.grid
    if not isinstance(grid, Grid2D) or u_lagged.grid != grid:
        raise ValueError("lagged state must live on the 2D grid of the spec")
    nx, ny = grid.nx_cells, grid.ny_cells
    hx, hy = grid.hx, grid.hy
    n = grid.node_count

    f = mobility(u_lagged.values, spec.mobility)
    volx = np.full(nx + 1, hx)
    volx[0] = volx[-1] = 0.5 * hx
    voly = np.full(ny + 1, hy)
    voly[0] = voly[-1] = 0.5 * hy

    rows, cols, vals = [], [], []

    # x-faces between (i, j) and (i+1, j): per unit y, flux f (w_e - w_w)/hx
    i = np.arange(nx)
    j = np.arange(ny + 1)
    gi, gj = np.meshgrid(i, j)
    left = (gj * (nx + 1) + gi).ravel()
    right = left + 1
    c = _face_mean(f[left], f[right]) / hx
    vleft = volx[gi.ravel()]
    vright = volx[gi.ravel() + 1]
    rows += [left, left, right, right]
    cols += [right, left, right, left]
    vals += [c / vleft, -c / vleft, -c / vright, c / vright]

    # y-faces between (i, j) and (i, j+1)
    i = np.arange(nx + 1)
    j = np.arange(ny)
    gi, gj = np.meshgrid(i, j)
    low = (gj * (nx + 1) + gi).ravel()
    high = low + (nx + 1)
    c = _face_mean(f[low], f[high]) / hy
    vlow = voly[gj.ravel()]
    vhigh = voly[gj.ravel() + 1]
    rows += [low, low, high, high]
    cols += [high, low, high, low]
    vals += [c / vlow, -c / vlow, -c / vhigh, c / vhigh]

    div = SparseMatrix.from_coo(
        n, np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    )
    return (div @ _laplacian_2d(grid)).scaled(-1.0)


def _assemble(u_lagged: Field, spec: LubricationSpec) -> SparseMatrix:
    if isinstance(spec.grid, Grid1D):
        return assemble_lubrication_1d(u_lagged, spec)
    return assemble_lubrication_2d(u_lagged, spec)


@dataclass
class SingularityRecord:
    """Touching-set history of one run.

    onset_time comes from the snapshot series (first nonempty touching set);
    liftoff_time is the first snapshot time after which the touching set
    stays empty for the rest of the run (the set can flicker at single nodes
    near the end, so "first empty" alone would fire early).
    onset_precutoff_time is the sharper per-step definition, the first time
    the raw pre-cutoff minimum drops to <= 0.  Lengths use the fencepost
    convention on the touching set's span: outermost touching nodes k apart
    measure k*h, an isolated node h/2 (the dry region is an interval whose
    interior can hold a thin residual film, so the span, not the longest
    all-zero block, is what converges to the continuum interval length);
    in 2D the touching measure is the trapezoid-weighted node area.
    """

    onset_time: Optional[float]
    liftoff_time: Optional[float]
    touching: list
    max_touching_length: float
    onset_precutoff_time: Optional[float] = None

    def write_csv(self, path):
        def fmt(v):
            return "none" if v is None else f"{v:.17g}"

        with open(path, "w") as fh:
            fh.write(f"onset={fmt(self.onset_time)}\n")
            fh.write(f"liftoff={fmt(self.liftoff_time)}\n")
            fh.write(f"max_length={fmt(self.max_touching_length)}\n")
            fh.write(f"onset_precutoff={fmt(self.onset_precutoff_time)}\n")
            fh.write("t,touching_length\n")
            for t, length in self.touching:
                fh.write(f"{t:.17g},{length:.17g}\n")


def touching_length(f: Field, threshold: float = 0.0) -> float:
    """Fencepost span of the touching set (1D) or the trapezoid-weighted
    area of all touching nodes (2D)."""
    touched = f.values <= threshold
    if isinstance(f.grid, Grid2D):
        if not touched.any():
            return 0.0
        return float(trapezoid_weights(f.grid)[touched].sum())
    idx = np.flatnonzero(touched)
    if idx.size == 0:
        return 0.0
    h = f.grid.h
    if idx.size == 1:
        return 0.5 * h
    return float(idx[-1] - idx[0]) * h


#: a dry patch narrower than this (domain units) does not count as an interval
ZERO_PLATEAU_MIN_WIDTH = 0.02
#: values at or below this count as identically zero for plateau detection
ZERO_PLATEAU_TOL = 1e-12


def has_zero_plateau(snapshots: Sequence, min_width: float = ZERO_PLATEAU_MIN_WIDTH,
                     tol: float = ZERO_PLATEAU_TOL) -> bool:
    """Whether any 1D snapshot is identically zero across a touching span of
    at least min_width.  Distinguishes a film that truly dies on an interval
    from one whose dry region carries a persistent interior bump; tol absorbs
    solver-level dust on top of exact cutoff zeros."""
    for _, f in snapshots:
        if not isinstance(f.grid, Grid1D):
            raise ValueError("zero-plateau detection is defined for 1D fields")
        idx = np.flatnonzero(f.values <= 0.0)
        if idx.size < 2:
            continue
        if (idx[-1] - idx[0]) * f.grid.h < min_width:
            continue
        if f.values[idx[0]:idx[-1] + 1].max() <= tol:
            return True
    return False


def track_singularity(snapshots: Sequence, threshold: float = 0.0) -> SingularityRecord:
    """Scan a post-cutoff snapshot series [(t, Field), ...] (strictly
    increasing t) for touchdown and persistent liftoff of the zero set."""
    times = [t for t, _ in snapshots]
    if any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
        raise ValueError("snapshot times must be strictly increasing")
    series = [(t, touching_length(f, threshold)) for t, f in snapshots]
    onset = next((t for t, length in series if length > 0.0), None)
    liftoff = None
    if onset is not None:
        last_nonempty = max(i for i, (_, length) in enumerate(series) if length > 0.0)
        if last_nonempty + 1 < len(series):
            liftoff = series[last_nonempty + 1][0]
    return SingularityRecord(
        onset_time=onset,
        liftoff_time=liftoff,
        touching=series,
        max_touching_length=max((length for _, length in series), default=0.0),
    )


def run_lubrication(spec: LubricationSpec, cfg: StepperConfig) -> tuple:
    """Advance the thin-film problem with lagged mobilities.

    Per step: floor the state, assemble the operator from the floored state,
    take one SDIRK step (stages share the step's factorization), record
    statistics.  Returns (final_field, trace, singularity_record); the final
    field is post-cutoff.  Refuses to start without a cutoff when epsilon = 0
    since the bare mobility rejects negative arguments.
    """
    if cfg.integrator != "sdirk3":
        raise ValueError("the lubrication driver runs the sdirk3 integrator only")
    if cfg.cutoff is None and spec.mobility.epsilon == 0.0:
        raise ValueError(
            "the unregularized mobility needs the cutoff enabled; "
            "pass CutoffParams(0.0) or a positive epsilon"
        )
    grid = spec.grid
    weights = trapezoid_weights(grid)
    cadence = cfg.snapshot_every if cfg.snapshot_every is not None else SNAPSHOT_EVERY_DEFAULT

    values = spec.initial_field().values.copy()
    trace = RunTrace()
    snaps = trace.snapshots

    def record(step: int, t: float, vals: np.ndarray, floored: np.ndarray, residual: float):
        trace.records.append(StepRecord(
            step=step, t=t,
            min_pre=float(vals.min()), min_post=float(floored.min()),
            mass_pre=float(weights @ vals), mass_post=float(weights @ floored),
            residual=residual,
        ))
        wants = step % cadence == 0 or any(
            abs(t - ts) <= 0.5 * cfg.dt for ts in cfg.snapshot_times
        )
        if wants:
            snaps.append((t, Field(grid, floored.copy())))

    floored = _floor_values(values, cfg.cutoff)
    record(0, cfg.t0, values, floored, 0.0)

    for n in range(cfg.n_steps):
        t_n = cfg.t0 + n * cfg.dt
        base = Field(grid, floored)
        a = _assemble(base, spec)
        stepper = _Sdirk3Stepper(a, cfg.dt, tol=cfg.solver_tol)
        new_values, residual = stepper.step(floored, t_n)
        t_next = cfg.t0 + (n + 1) * cfg.dt
        if not np.all(np.isfinite(new_values)):
            trace.diverged = True
            raise DivergenceError(f"state went non-finite at t = {t_next}", trace)
        new_floored = _floor_values(new_values, cfg.cutoff)
        record(n + 1, t_next, new_values, new_floored, residual)
        values, floored = new_values, new_floored

    record_sing = track_singularity(snaps)
    for r in trace.records:
        if r.min_pre <= 0.0:
            record_sing.onset_precutoff_time = r.t
            break
    final = Field(grid, floored)
    return final, trace, record_sing
