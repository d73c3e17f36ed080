"""Square sparse matrices and the direct solvers the steppers run on.

Matrices are stored in canonical CSR (sorted column indices, duplicates
summed, no explicit zeros).  Solves are direct: systems whose bandwidth is
at most BANDED_BANDWIDTH_MAX on each side go through LAPACK banded LU
(gbtrf/gbtrs), everything else through SuperLU.  Every solve does one step
of iterative refinement and then re-verifies the max-norm residual against
the configured tolerance, so a returned solution is always a checked one.

The one-step scheme pair is bundled in SparseOperator: B1 u^{n+1} =
B0 u^n + F^n, with F either a fixed vector or a callback evaluated at the
step's start time.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import get_lapack_funcs

from .grids import _require_finite

BANDED_BANDWIDTH_MAX = 5


class SolveError(RuntimeError):
    """Singular system or a residual that failed verification."""


class SparseMatrix:
    """Immutable-by-convention square CSR matrix."""

    __slots__ = ("_csr",)

    def __init__(self, matrix):
        csr = sp.csr_matrix(matrix, dtype=float, copy=True)
        if csr.shape[0] != csr.shape[1]:
            raise ValueError(f"matrix must be square, got shape {csr.shape}")
        csr.sum_duplicates()
        csr.sort_indices()
        csr.eliminate_zeros()
        self._csr = csr

    @classmethod
    def from_coo(cls, n: int, rows, cols, vals) -> "SparseMatrix":
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=float)
        if rows.size and (rows.min() < 0 or rows.max() >= n or cols.min() < 0 or cols.max() >= n):
            raise ValueError("coordinate index out of range")
        return cls(sp.coo_matrix((vals, (rows, cols)), shape=(n, n)))

    @classmethod
    def identity(cls, n: int) -> "SparseMatrix":
        return cls(sp.identity(n, format="csr"))

    @classmethod
    def from_diagonal(cls, diag) -> "SparseMatrix":
        diag = np.asarray(diag, dtype=float)
        return cls(sp.diags(diag, format="csr"))

    @property
    def csr(self) -> sp.csr_matrix:
        return self._csr

    @property
    def dimension(self) -> int:
        return self._csr.shape[0]

    @property
    def nnz(self) -> int:
        return self._csr.nnz

    @property
    def indptr(self) -> np.ndarray:
        return self._csr.indptr

    @property
    def indices(self) -> np.ndarray:
        return self._csr.indices

    @property
    def data(self) -> np.ndarray:
        return self._csr.data

    def matvec(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dimension,):
            raise ValueError(f"matvec operand has shape {x.shape}, expected ({self.dimension},)")
        return self._csr @ x

    def __matmul__(self, other: "SparseMatrix") -> "SparseMatrix":
        return SparseMatrix(self._csr @ other._csr)

    def __add__(self, other: "SparseMatrix") -> "SparseMatrix":
        return SparseMatrix(self._csr + other._csr)

    def __sub__(self, other: "SparseMatrix") -> "SparseMatrix":
        return SparseMatrix(self._csr - other._csr)

    def scaled(self, s: float) -> "SparseMatrix":
        return SparseMatrix(self._csr * float(s))

    def operator_norm_inf(self) -> float:
        """Exact max absolute row sum."""
        if self.nnz == 0:
            return 0.0
        return float(np.max(np.abs(self._csr).sum(axis=1)))

    def bandwidth(self) -> tuple:
        """(lower, upper) bandwidth from the stored pattern."""
        if self.nnz == 0:
            return (0, 0)
        coo = self._csr.tocoo()
        d = coo.row - coo.col
        return (int(max(d.max(), 0)), int(max(-d.min(), 0)))

    def to_dense(self) -> np.ndarray:
        return self._csr.toarray()

    def dump_coordinate(self, path):
        """Text dump, one 'row col value' line per stored entry."""
        coo = self._csr.tocoo()
        with open(path, "w") as fh:
            for r, c, v in zip(coo.row, coo.col, coo.data):
                fh.write(f"{r} {c} {v:.17g}\n")


def identity_plus(a: SparseMatrix, scale: float) -> SparseMatrix:
    """I + scale * A, the shifted systems the implicit steppers factor."""
    return SparseMatrix(sp.identity(a.dimension, format="csr") + float(scale) * a.csr)


def matvec(a: SparseMatrix, x: np.ndarray) -> np.ndarray:
    return a.matvec(x)


def operator_norm_inf(a: SparseMatrix) -> float:
    return a.operator_norm_inf()


@dataclass(frozen=True)
class SolveReport:
    residual_norm: float
    iterations: int
    method: str
    tolerance: float


def default_tolerance(a: SparseMatrix) -> float:
    """1e-12 times the system scale; the residual check is relative to
    max(1, |rhs|_inf), so stiff operators get proportional slack."""
    return 1e-12 * max(1.0, a.operator_norm_inf())


class Factorization:
    """Reusable LU of one SparseMatrix; each solve re-verifies its residual."""

    def __init__(self, a: SparseMatrix, tol: float = None):
        self._a = a
        self._tol = default_tolerance(a) if tol is None else float(tol)
        if self._tol <= 0:
            raise ValueError("solver tolerance must be positive")
        kl, ku = a.bandwidth()
        n = a.dimension
        if max(kl, ku) <= BANDED_BANDWIDTH_MAX:
            self._method = "banded-lu"
            coo = a.csr.tocoo()
            ab = np.zeros((2 * kl + ku + 1, n))
            ab[kl + ku + coo.row - coo.col, coo.col] = coo.data
            gbtrf, self._gbtrs = get_lapack_funcs(("gbtrf", "gbtrs"), (ab,))
            lu, ipiv, info = gbtrf(ab, kl, ku)
            if info > 0:
                raise SolveError(
                    f"singular banded system (zero pivot at row {info - 1}); "
                    f"|A|_inf = {a.operator_norm_inf():.3e}"
                )
            if info < 0:
                raise SolveError(f"banded factorization failed (lapack info {info})")
            self._lu, self._ipiv, self._kl, self._ku = lu, ipiv, kl, ku
        else:
            self._method = "sparse-lu"
            try:
                self._splu = spla.splu(a.csr.tocsc())
            except RuntimeError as err:
                raise SolveError(
                    f"sparse factorization failed ({err}); |A|_inf = {a.operator_norm_inf():.3e}"
                ) from err

    @property
    def method(self) -> str:
        return self._method

    def _backsub(self, rhs: np.ndarray) -> np.ndarray:
        if self._method == "banded-lu":
            x, info = self._gbtrs(self._lu, self._kl, self._ku, rhs, self._ipiv)
            if info != 0:
                raise SolveError(f"banded back-substitution failed (lapack info {info})")
            return x
        return self._splu.solve(rhs)

    def solve(self, rhs: np.ndarray) -> tuple:
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape != (self._a.dimension,):
            raise ValueError(
                f"rhs has shape {rhs.shape}, expected ({self._a.dimension},)"
            )
        _require_finite(rhs, "solve rhs")
        x = self._backsub(rhs)
        # one round of iterative refinement keeps the verified residual near
        # machine level even for stiff operators
        r = rhs - self._a.matvec(x)
        x = x + self._backsub(r)
        scale = max(1.0, float(np.max(np.abs(rhs))))
        residual = float(np.max(np.abs(self._a.matvec(x) - rhs))) / scale
        if not np.isfinite(residual) or residual > self._tol:
            raise SolveError(
                f"solution failed verification: residual {residual:.3e} > tol "
                f"{self._tol:.3e} ({self._method}, |A|_inf = {self._a.operator_norm_inf():.3e})"
            )
        return x, SolveReport(residual, 0, self._method, self._tol)


def factorize(a: SparseMatrix, tol: float = None) -> Factorization:
    return Factorization(a, tol)


def solve(a: SparseMatrix, rhs: np.ndarray, tol: float = None) -> tuple:
    """One-shot factor + solve; returns (x, SolveReport)."""
    return Factorization(a, tol).solve(rhs)


SourceTerm = Union[np.ndarray, Callable[[float], np.ndarray]]


@dataclass(frozen=True)
class SparseOperator:
    """One-step scheme pair: B1 u^{n+1} = B0 u^n + F^n.

    ``source`` is the fixed vector F, or a callable t_n -> F^n when the
    forcing or boundary data move in time.  ``time_independent`` asserts the
    matrices never change between steps, which lets a run factor B1 once.
    """

    b1: SparseMatrix
    b0: SparseMatrix
    source: SourceTerm
    time_independent: bool = True

    def __post_init__(self):
        n = self.b1.dimension
        if self.b0.dimension != n:
            raise ValueError("B0 and B1 dimensions differ")
        if isinstance(self.source, np.ndarray) and self.source.shape != (n,):
            raise ValueError("source vector length does not match the matrices")

    @property
    def dimension(self) -> int:
        return self.b1.dimension

    def source_at(self, t: float) -> np.ndarray:
        if callable(self.source):
            f = np.asarray(self.source(t), dtype=float)
        else:
            f = self.source
        if f.shape != (self.dimension,):
            raise ValueError("source callback returned a vector of wrong length")
        return f
