"""Sparse and dense linear-algebra kernels.

CSR is the only sparse format. Products go through a cached
``scipy.sparse.csr_array`` view; dense factorizations use LAPACK Cholesky.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.linalg import lapack

from dikinwalk.errors import DimensionMismatch, NotPositiveDefinite

SYM_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    """CSR matrix. Construct via the ``from_*`` helpers or with canonical arrays."""

    n_rows: int
    n_cols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        ro = np.ascontiguousarray(self.row_offsets, dtype=np.int64)
        ci = np.ascontiguousarray(self.col_indices, dtype=np.int64)
        va = np.ascontiguousarray(self.values, dtype=np.float64)
        object.__setattr__(self, "row_offsets", ro)
        object.__setattr__(self, "col_indices", ci)
        object.__setattr__(self, "values", va)
        if self.n_rows < 0 or self.n_cols < 0:
            raise DimensionMismatch("negative shape")
        if ro.shape != (self.n_rows + 1,) or ro[0] != 0:
            raise DimensionMismatch("row_offsets must have length n_rows+1 and start at 0")
        nnz = int(ro[-1])
        if ci.shape != (nnz,) or va.shape != (nnz,):
            raise DimensionMismatch("row_offsets[-1] must equal nnz")
        if np.any(np.diff(ro) < 0):
            raise ValueError("row_offsets not monotone")
        if nnz:
            if ci.min() < 0 or ci.max() >= self.n_cols:
                raise ValueError("column index out of range")
            # strictly increasing within rows: a non-increase is only allowed at a row start
            step = np.diff(ci) <= 0
            starts = np.zeros(nnz - 1, dtype=bool)
            inner = ro[1:-1]
            inner = inner[(inner > 0) & (inner < nnz)]
            starts[inner - 1] = True
            if np.any(step & ~starts):
                raise ValueError("column indices must be strictly increasing within a row")
        if not np.all(np.isfinite(va)):
            raise ValueError("non-finite value")

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self):
        return int(self.row_offsets[-1])

    @cached_property
    def csr(self):
        return sp.csr_array(
            (self.values, self.col_indices, self.row_offsets), shape=self.shape
        )

    @cached_property
    def csr_t(self):
        return self.csr.T.tocsr()

    @cached_property
    def dense(self):
        a = self.csr.toarray()
        a.setflags(write=False)
        return a

    def to_dense(self):
        return self.csr.toarray()

    @classmethod
    def from_scipy(cls, m):
        m = sp.csr_array(m)
        m.sum_duplicates()
        m.sort_indices()
        return cls(m.shape[0], m.shape[1], m.indptr, m.indices, m.data)

    @classmethod
    def from_dense(cls, a, drop_zeros=True):
        a = np.atleast_2d(np.asarray(a, dtype=np.float64))
        m = sp.csr_array(a)
        if drop_zeros:
            m.eliminate_zeros()
        return cls.from_scipy(m)

    @classmethod
    def from_coo(cls, n_rows, n_cols, rows, cols, vals):
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        if not (rows.shape == cols.shape == vals.shape):
            raise DimensionMismatch("coo arrays differ in length")
        if rows.size:
            if rows.min() < 0 or rows.max() >= n_rows or cols.min() < 0 or cols.max() >= n_cols:
                raise ValueError("coo index out of range")
            key = rows * n_cols + cols
            if np.unique(key).size != key.size:
                raise ValueError("duplicate (row, col) entry")
        m = sp.coo_array((vals, (rows, cols)), shape=(n_rows, n_cols)).tocsr()
        return cls.from_scipy(m)

    @classmethod
    def identity(cls, n):
        return cls(n, n, np.arange(n + 1), np.arange(n), np.ones(n))

    @staticmethod
    def vstack(top, bottom):
        if top.n_cols != bottom.n_cols:
            raise DimensionMismatch("column counts differ")
        ro = np.concatenate([top.row_offsets, bottom.row_offsets[1:] + top.nnz])
        return SparseMatrix(
            top.n_rows + bottom.n_rows,
            top.n_cols,
            ro,
            np.concatenate([top.col_indices, bottom.col_indices]),
            np.concatenate([top.values, bottom.values]),
        )


@dataclass(frozen=True, eq=False)
class DenseSym:
    """Dense symmetric matrix stored as a full square array."""

    dim: int
    entries: np.ndarray

    def __post_init__(self):
        e = np.ascontiguousarray(self.entries, dtype=np.float64).reshape(self.dim, self.dim)
        scale = max(np.abs(e).max(initial=0.0), 1e-300)
        if np.abs(e - e.T).max(initial=0.0) > SYM_RTOL * scale:
            raise ValueError("matrix not symmetric")
        object.__setattr__(self, "entries", e)


def matvec(M, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != M.n_cols:
        raise DimensionMismatch(f"expected {M.n_cols} rows in x, got {x.shape[0]}")
    return M.csr @ x


def matvec_t(M, y):
    y = np.asarray(y, dtype=np.float64)
    if y.shape[0] != M.n_rows:
        raise DimensionMismatch(f"expected {M.n_rows} rows in y, got {y.shape[0]}")
    return M.csr_t @ y


def _check_weights(M, C):
    C = np.asarray(C, dtype=np.float64)
    if C.shape != (M.n_rows,):
        raise DimensionMismatch(f"weights must have length {M.n_rows}")
    return C


DENSE_GRAM_MAX_COLS = 32


def gram(M, C):
    """Dense MᵀCM. Costs n_rows·n_cols² and is the reference path."""
    C = _check_weights(M, C)
    dense = M.dense
    g = dense.T @ (C[:, None] * dense)
    return DenseSym(M.n_cols, 0.5 * (g + g.T))


def gram_sparse(M, C):
    """MᵀCM assembled with sparse products; same result as ``gram`` up to rounding."""
    C = _check_weights(M, C)
    if M.n_cols <= DENSE_GRAM_MAX_COLS:
        # sparse-product overhead dominates for narrow matrices
        return gram(M, C)
    g = (M.csr_t @ (M.csr * C[:, None])).toarray()
    return DenseSym(M.n_cols, 0.5 * (g + g.T))


class Factorization:
    """Cholesky factor of an SPD matrix."""

    def __init__(self, G):
        a = G.entries if isinstance(G, DenseSym) else np.asarray(G, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionMismatch("square matrix required")
        if a.shape[0] == 0:
            raise DimensionMismatch("empty matrix")
        c, info = lapack.dpotrf(a, lower=1, clean=1)
        if info != 0:
            raise NotPositiveDefinite(f"non-positive pivot at index {info - 1}")
        diag = np.diagonal(c)
        if not np.all(np.isfinite(diag)) or np.any(diag <= 0):
            raise NotPositiveDefinite("non-positive pivot")
        self.dim = a.shape[0]
        self.lower = c
        self._logdet = 2.0 * float(np.sum(np.log(diag)))
        self._inverse = None

    def solve(self, v):
        return sla.cho_solve((self.lower, True), v, check_finite=False)

    def logdet(self):
        return self._logdet

    def inverse(self):
        """Explicit inverse, used for cheap batched products."""
        if self._inverse is None:
            inv, info = lapack.dpotri(self.lower, lower=1)
            if info != 0:
                raise NotPositiveDefinite("inverse failed")
            inv = np.tril(inv)
            inv = inv + np.tril(inv, -1).T
            self._inverse = inv
        return self._inverse


def factor(G):
    return Factorization(G)


def logdet_dense(G):
    return Factorization(G).logdet()
