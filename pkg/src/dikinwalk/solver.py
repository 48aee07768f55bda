"""Maintained solver for ÂᵀCÂ under a slowly drifting positive diagonal C.

Two backends share one interface. ``EXACT`` refactorizes whenever C moves.
``WOODBURY`` keeps the factorization of a base matrix G₀ = ÂᵀC₀Â and applies a
low-rank Woodbury correction for rows whose weight drifted by more than
``eps_lowrank`` relative to C₀. Rows below that threshold are absorbed by a few
steps of iterative refinement against the exact operator, whose contraction
rate is bounded by the largest uncorrected relative drift.
"""

import enum
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from dikinwalk.errors import DimensionMismatch, NotPositiveDefinite, StaleState
from dikinwalk.sparsela import factor, gram_sparse

STALE_RTOL = 1e-12
REFINE_TOL = 1e-10
REFINE_MAX_ITERS = 50
# above this contraction bound interpolated solves switch to per-t factorization
INTERP_MAX_RATE = 0.5
# below this many right-hand sides use triangular solves instead of the explicit inverse
BATCH_MIN_RHS = 8
DIRECT_MAX_COLS = 16


class Backend(enum.Enum):
    EXACT = "dense"
    WOODBURY = "woodbury"


@dataclass
class SolverStats:
    """Counters. The factorization done by ``initialize`` is not a refactorization."""

    refactorizations: int = 0
    lowrank_updates: int = 0
    solves: int = 0


class SolverState:
    """Mutable solver handle. Single writer: do not call ``update`` during a solve."""

    def __init__(self, M, backend, k_max, eps_lowrank):
        self.M = M
        self.backend = Backend(backend)
        self.k_max = int(k_max)
        self.eps_lowrank = float(eps_lowrank)
        self.stats = SolverStats()
        self.base_weights = None
        self.base_factor = None
        self.weights = None
        self.pending = np.empty(0, dtype=np.int64)
        self._U = self._Z = self._delta = self._lu = None
        self._rate = 0.0
        self._zcache_rows = np.empty(0, dtype=np.int64)
        self._zcache = None
        self._inv32 = None

    @property
    def pending_rows(self):
        return self.pending

    @property
    def refine_rate(self):
        """Upper bound on the refinement contraction for plain solves."""
        return self._rate

    def _refactor(self, C, count=True):
        self.base_weights = C.copy()
        self.base_factor = factor(gram_sparse(self.M, C))
        self.weights = C.copy()
        self.pending = np.empty(0, dtype=np.int64)
        self._U = self._Z = self._delta = self._lu = None
        self._rate = 0.0
        self._zcache_rows = np.empty(0, dtype=np.int64)
        self._zcache = None
        self._inv32 = None
        if count:
            self.stats.refactorizations += 1

    def _base_apply(self, X, single=False):
        if X.ndim == 2 and X.shape[1] >= BATCH_MIN_RHS:
            if single:
                if self._inv32 is None:
                    self._inv32 = self.base_factor.inverse().astype(np.float32)
                return (self._inv32 @ X.astype(np.float32)).astype(np.float64)
            return self.base_factor.inverse() @ X
        return self.base_factor.solve(X)

    def _z_columns(self, rows):
        """G₀⁻¹Âᵀ restricted to ``rows``, reusing cached columns."""
        if self._zcache is not None:
            pos = np.searchsorted(self._zcache_rows, rows)
            pos = np.minimum(pos, len(self._zcache_rows) - 1)
            hit = self._zcache_rows[pos] == rows
        else:
            hit = np.zeros(len(rows), dtype=bool)
        missing = rows[~hit]
        if missing.size:
            U_new = self.M.csr[missing].toarray()
            Z_new = self._base_apply(np.ascontiguousarray(U_new.T))
            if self._zcache is None or len(self._zcache_rows) + missing.size > 4 * max(self.k_max, 1):
                keep_rows, keep_Z = rows[hit], (self._zcache[:, pos[hit]] if hit.any() else None)
            else:
                keep_rows, keep_Z = self._zcache_rows, self._zcache
            all_rows = np.concatenate([keep_rows, missing])
            all_Z = Z_new if keep_Z is None else np.hstack([keep_Z, Z_new])
            order = np.argsort(all_rows, kind="stable")
            self._zcache_rows = all_rows[order]
            self._zcache = np.ascontiguousarray(all_Z[:, order])
        pos = np.searchsorted(self._zcache_rows, rows)
        return self._zcache[:, pos]

    def _set_lowrank(self, C, rows):
        self.weights = C.copy()
        self.pending = rows
        rel = np.abs(C / self.base_weights - 1.0)
        rel[rows] = 0.0
        self._rate = float(rel.max(initial=0.0))
        if rows.size == 0:
            self._U = self._Z = self._delta = self._lu = None
            return
        U = self.M.csr[rows].toarray()
        Z = self._z_columns(rows)
        delta = C[rows] - self.base_weights[rows]
        K = np.eye(rows.size) + delta[:, None] * (U @ Z)
        lu = sla.lu_factor(K, check_finite=False)
        if not np.all(np.isfinite(lu[0])) or np.min(np.abs(np.diagonal(lu[0]))) == 0.0:
            raise NotPositiveDefinite("singular Woodbury capacitance")
        self._U, self._Z, self._delta, self._lu = U, Z, delta, lu
        self.stats.lowrank_updates += 1

    def apply_preconditioner(self, X, single=False):
        """Inverse of the represented operator G₀ + UᵀΔU (without sub-threshold rows).

        ``single`` applies G₀⁻¹ in single precision; only valid inside refinement loops.
        """
        W = self._base_apply(X, single)
        if self._Z is not None:
            y = self._Z.T @ X
            y = self._delta[:, None] * y if y.ndim == 2 else self._delta * y
            y = sla.lu_solve(self._lu, y, check_finite=False)
            W = W - self._Z @ y
        return W

    def represented_weights(self):
        """Weights of the operator inverted exactly by ``apply_preconditioner``."""
        p = self.base_weights.copy()
        p[self.pending] = self.weights[self.pending]
        return p

    def operator(self, X, C=None):
        """ÂᵀCÂX via sparse products."""
        C = self.weights if C is None else C
        AX = self.M.csr @ X
        if AX.ndim == 2 and C.ndim == 1:
            AX = C[:, None] * AX
        else:
            AX = C * AX
        return self.M.csr_t @ AX


def _as_weights(C, n):
    C = np.asarray(C, dtype=np.float64)
    if C.shape != (n,):
        raise DimensionMismatch(f"weights must have length {n}")
    if not np.all(np.isfinite(C)) or np.any(C <= 0):
        raise ValueError("weights must be positive and finite")
    return C


def initialize(C, M, backend=Backend.WOODBURY, k_max=64, eps_lowrank=1e-3):
    C = _as_weights(C, M.n_rows)
    if k_max < 0 or eps_lowrank < 0:
        raise ValueError("k_max and eps_lowrank must be nonnegative")
    state = SolverState(M, backend, k_max, eps_lowrank)
    state._refactor(C, count=False)
    return state


def update(C_new, M, state):
    """Make ``state`` represent ÂᵀC_newÂ. Mutates and returns ``state``."""
    if M is not state.M and M.shape != state.M.shape:
        raise DimensionMismatch("matrix differs from the one the state was built for")
    C_new = _as_weights(C_new, M.n_rows)
    if np.array_equal(C_new, state.weights):
        return state
    if state.backend is Backend.EXACT or state.k_max == 0:
        if not np.array_equal(C_new, state.base_weights):
            state._refactor(C_new)
        else:
            state._set_lowrank(C_new, np.empty(0, dtype=np.int64))
        return state
    rel = np.abs(C_new / state.base_weights - 1.0)
    rows = np.flatnonzero(rel > state.eps_lowrank)
    if rows.size > state.k_max:
        state._refactor(C_new)
        return state
    try:
        state._set_lowrank(C_new, rows)
    except NotPositiveDefinite:
        state._refactor(C_new)
    return state


def _check_current(C, state):
    C = np.asarray(C, dtype=np.float64)
    if C.shape != state.weights.shape:
        raise DimensionMismatch("weights length differs from solver state")
    gap = np.max(np.abs(C - state.weights) / state.weights)
    if not gap <= STALE_RTOL:
        raise StaleState(f"solver represents different weights (max relative gap {gap:.3g})")


def _refine(state, V, X, C, rate):
    """Iterative refinement of G X = V with G = ÂᵀCÂ (C may be per-column)."""
    if rate <= 0.0:
        return X
    n_iter = REFINE_MAX_ITERS
    if rate < 1.0:
        n_iter = min(REFINE_MAX_ITERS, int(np.ceil(np.log(REFINE_TOL) / np.log(rate))))
    vnorm = np.linalg.norm(V, axis=0)
    for _ in range(n_iter):
        R = V - state.operator(X, C)
        if np.all(np.linalg.norm(R, axis=0) <= REFINE_TOL * vnorm):
            break
        X = X + state.apply_preconditioner(R)
    return X


def solve(v, C, M, state):
    """w with ÂᵀCÂ w = v. ``v`` may hold several right-hand sides as columns."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[0] != M.n_cols:
        raise DimensionMismatch(f"right-hand side needs {M.n_cols} rows")
    _check_current(C, state)
    state.stats.solves += 1 if v.ndim == 1 else v.shape[1]
    X = state.apply_preconditioner(v)
    return _refine(state, v, X, state.weights, state._rate)


def frobenius_change(C_old, C_new):
    """Σᵢ((c'ᵢ − cᵢ)/cᵢ)²."""
    C_old = np.asarray(C_old, dtype=np.float64)
    C_new = np.asarray(C_new, dtype=np.float64)
    if C_old.shape != C_new.shape:
        raise DimensionMismatch("weight vectors differ in length")
    r = (C_new - C_old) / C_old
    return float(np.dot(r, r))


def _solve_per_t(V, C_from, C_to, ts, M, chunk=2048):
    """Direct solves with G(t) = (1−t)G_from + tG_to, one dense system per column."""
    G0 = gram_sparse(M, C_from).entries
    G1 = gram_sparse(M, C_to).entries
    out = np.empty_like(V)
    for lo in range(0, V.shape[1], chunk):
        t = ts[lo : lo + chunk]
        G = (1.0 - t)[:, None, None] * G0 + t[:, None, None] * G1
        out[:, lo : lo + chunk] = np.linalg.solve(G, V[:, lo : lo + chunk].T[:, :, None])[:, :, 0].T
    return out


def _refine_interpolated(state, V, C_from, dC, ts):
    """Mixed-precision refinement with per-column convergence tracking.

    Returns None if some column misses the tolerance within the iteration cap.
    """
    A, At = state.M.csr, state.M.csr_t
    X = state.apply_preconditioner(V, single=True)
    tol = REFINE_TOL * np.linalg.norm(V, axis=0)
    active = np.arange(V.shape[1])
    Xa, Va = X, V
    Ct = C_from[:, None] + dC[:, None] * ts
    for _ in range(REFINE_MAX_ITERS):
        AX = A @ Xa
        AX *= Ct
        R = Va - At @ AX
        keep = np.einsum("ij,ij->j", R, R) > tol[active] ** 2
        if not keep.any():
            X[:, active] = Xa
            return X
        if not keep.all():
            X[:, active] = Xa
            active = active[keep]
            Xa, Va, Ct, R = X[:, active], V[:, active], Ct[:, keep], R[:, keep]
        Xa = Xa + state.apply_preconditioner(R, single=True)
    return None


def solve_interpolated(V, C_from, C_to, ts, M, state):
    """Column j of the result solves ÂᵀC(t_j)Â w = V[:, j] with C(t) = (1−t)C_from + tC_to.

    ``state`` must represent ``C_from``. It serves as the preconditioner for
    refinement; when the refinement contraction bound exceeds
    ``INTERP_MAX_RATE`` (or for the exact backend) each column is solved
    directly instead.
    """
    V = np.asarray(V, dtype=np.float64)
    ts = np.asarray(ts, dtype=np.float64)
    if V.ndim != 2 or V.shape[0] != M.n_cols or ts.shape != (V.shape[1],):
        raise DimensionMismatch("V must be d×k with one t per column")
    _check_current(C_from, state)
    C_to = _as_weights(C_to, M.n_rows)
    state.stats.solves += V.shape[1]
    if V.shape[1] == 0:
        return V.copy()
    p = state.represented_weights()
    r_from = C_from / p - 1.0
    r_to = C_to / p - 1.0
    # c(t)/p − 1 is affine in t, so its extremes sit at the endpoints of the used t-range
    t_lo, t_hi = float(ts.min()), float(ts.max())
    rate = max(
        float(np.max(np.abs((1 - t_lo) * r_from + t_lo * r_to))),
        float(np.max(np.abs((1 - t_hi) * r_from + t_hi * r_to))),
    )
    # narrow systems are cheaper to solve directly than to refine
    if state.backend is Backend.EXACT or rate > INTERP_MAX_RATE or M.n_cols <= DIRECT_MAX_COLS:
        return _solve_per_t(V, C_from, C_to, ts, M)
    X = _refine_interpolated(state, V, C_from, C_to - C_from, ts)
    if X is None:
        return _solve_per_t(V, C_from, C_to, ts, M)
    return X
