"""Randomized log-determinant differences and the smoothed acceptance factor.

A single draw is Y = vᵀ(ÂᵀC(t)Â)⁻¹Âᵀ(D_z − D_θ)Âv with v standard normal,
t uniform on [0, 1] and C(t) = (1−t)D_θ + tD_z. Averaging over v gives the
derivative of log det ÂᵀC(t)Â at t, so E[Y] = log det Φ(z) − log det Φ(θ).

Independent draws feed a truncated power series for sigmoid(Δ/2). The first
draw only selects the series; the remaining draws build the unbiased products,
so the selection does not bias them.
"""

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.special import expit
from scipy import integrate

from dikinwalk.sparsela import gram_sparse, matvec, matvec_t
from dikinwalk.solver import solve_interpolated

TAYLOR_UPPER = 0.25
CHUNK_RUNS = 16384


class Branch(enum.Enum):
    TAYLOR_AT_ZERO = "taylor"
    EXPONENTIAL_AT_INFINITY = "exponential"
    SATURATE_ONE = "saturate"


@dataclass(frozen=True)
class SeriesBranch:
    kind: Branch
    coefficients: np.ndarray


@dataclass(frozen=True)
class EstimatorSample:
    y: float
    v_seed: tuple
    t_seed: tuple


def _y_batch(bp_theta, bp_z, M, solver, ts, V):
    dw = bp_z.weights - bp_theta.weights
    W = matvec_t(M, dw[:, None] * matvec(M, V))
    X = solve_interpolated(W, bp_theta.weights, bp_z.weights, ts, M, solver)
    return np.einsum("ij,ij->j", V, X)


def draw_inputs(rng, n, d):
    """t block first, then the v block; column j of V pairs with ts[j]."""
    ts = rng.random(n)
    V = rng.standard_normal((n, d)).T
    return ts, np.ascontiguousarray(V)


def sample_delta(bp_theta, bp_z, M, solver, rng, stream_id=None):
    """One draw of Y. ``solver`` must represent D(θ)."""
    ts, V = draw_inputs(rng, 1, M.n_cols)
    y = float(_y_batch(bp_theta, bp_z, M, solver, ts, V)[0])
    sid = tuple(stream_id) if stream_id is not None else ()
    return EstimatorSample(y, sid + ("v",), sid + ("t",))


def sample_deltas(bp_theta, bp_z, M, solver, n, rng):
    """``n`` independent draws of Y as an array."""
    ts, V = draw_inputs(rng, n, M.n_cols)
    return _y_batch(bp_theta, bp_z, M, solver, ts, V)


def select_branch_kind(y1, gamma):
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    if y1 < TAYLOR_UPPER:
        return Branch.TAYLOR_AT_ZERO
    if y1 < 2.0 * math.log(1.0 / gamma):
        return Branch.EXPONENTIAL_AT_INFINITY
    return Branch.SATURATE_ONE


def select_branch(y1, gamma, n_terms=None):
    kind = select_branch_kind(y1, gamma)
    n = default_sample_count(gamma) if n_terms is None else int(n_terms)
    if kind is Branch.TAYLOR_AT_ZERO:
        coef = taylor_coefficients(n)
    else:
        coef = np.empty(0)
    return SeriesBranch(kind, coef)


@lru_cache(maxsize=None)
def _taylor_fractions(n):
    # sigmoid' = sigmoid·(1 − sigmoid) as a recurrence on power-series coefficients
    a = [Fraction(1, 2)]
    for k in range(n):
        conv = sum((a[i] * a[k - i] for i in range(k + 1)), Fraction(0))
        a.append((a[k] - conv) / (k + 1))
    return tuple(ak / 2**i for i, ak in enumerate(a))


@lru_cache(maxsize=64)
def _taylor_array(n):
    a = np.array([float(c) for c in _taylor_fractions(n)])
    a.flags.writeable = False
    return a


def taylor_coefficients(n):
    """First ``n + 1`` Taylor coefficients of x ↦ sigmoid(x/2) at 0."""
    return _taylor_array(int(n))


def default_sample_count(gamma):
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    # shave rounding noise so that e.g. gamma = e^-1 yields exactly 10
    return max(1, math.ceil(10.0 * math.log(1.0 / gamma) - 1e-9))


def sigmoid_half(delta):
    # expit keeps the lower tail instead of rounding 1 + tanh to zero
    return expit(np.asarray(delta, dtype=float) / 2.0)


def exponential_truncation(n_terms):
    return 2 * n_terms - 1


def _cumprod_scaled(D):
    """E[:, ℓ] = Π_{j≤ℓ} D_j / ℓ! for ℓ = 0..D.shape[1]."""
    runs, n = D.shape
    E = np.ones((runs, n + 1))
    np.cumprod(D / np.arange(1, n + 1), axis=1, out=E[:, 1:])
    return E


def _taylor_values(Y, n_terms):
    coef = taylor_coefficients(n_terms)
    P = np.ones((Y.shape[0], Y.shape[1]))
    if Y.shape[1] > 1:
        np.cumprod(Y[:, 1:], axis=1, out=P[:, 1:])
    return P @ coef[: Y.shape[1]]


@lru_cache(maxsize=64)
def _exponential_tables(n_terms):
    """(K/2 scale, signed powers (−k/(2·scale))^ℓ, k) for the recentered series."""
    K = exponential_truncation(n_terms)
    k = np.arange(K + 1, dtype=float)
    # powers of k/2 are rescaled by (K/2)^ℓ so neither factor overflows
    scale = max(K / 2.0, 1.0)
    base = -k / (2.0 * scale)
    powers = np.ones((n_terms, K + 1))
    if n_terms > 1:
        powers[1:] = np.cumprod(np.broadcast_to(base, (n_terms - 1, K + 1)), axis=0)
    powers.flags.writeable = False
    return scale, powers, k


def _exponential_values(Y, n_terms):
    c = Y[:, 0]
    scale, powers, k = _exponential_tables(int(n_terms))
    E = _cumprod_scaled(scale * (Y[:, 1:] - c[:, None]))
    inner = E @ powers
    outer = np.where(k % 2 == 0, 1.0, -1.0)[None, :] * np.exp(-0.5 * c[:, None] * k[None, :])
    return np.einsum("rk,rk->r", outer, inner)


def estimate_factor_batch(Y, gamma, n_terms=None, clamp=True):
    """Smoothed-factor estimates for each row of ``Y`` (runs × 𝒩 draws)."""
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    n = Y.shape[1] if n_terms is None else int(n_terms)
    if n < 1 or Y.shape[1] < n:
        raise ValueError("need at least n_terms draws per run")
    Y = Y[:, :n]
    X = np.ones(Y.shape[0])
    kinds = np.full(Y.shape[0], 2, dtype=np.int8)
    kinds[Y[:, 0] < 2.0 * math.log(1.0 / gamma)] = 1
    kinds[Y[:, 0] < TAYLOR_UPPER] = 0
    for lo in range(0, Y.shape[0], CHUNK_RUNS):
        sl = slice(lo, lo + CHUNK_RUNS)
        ks = kinds[sl]
        Xs = X[sl]
        t = ks == 0
        if t.any():
            Xs[t] = _taylor_values(Y[sl][t], n)
        e = ks == 1
        if e.any():
            Xs[e] = _exponential_values(Y[sl][e], n)
    if clamp:
        X = np.clip(np.nan_to_num(X, nan=0.0, posinf=1.0, neginf=0.0), 0.0, 1.0)
    return X


def estimate_factor(samples, branch, n_terms, gamma=None, clamp=True):
    """Clamped smoothed-factor estimate from 𝒩 draws.

    ``samples`` holds EstimatorSample objects or plain floats. ``branch`` must
    be the branch selected from the first draw.
    """
    ys = np.array([s.y if isinstance(s, EstimatorSample) else float(s) for s in samples])
    n = int(n_terms)
    if n < 1 or ys.size < n:
        raise ValueError("need at least n_terms samples")
    ys = ys[:n][None, :]
    if branch.kind is Branch.SATURATE_ONE:
        x = 1.0
    elif branch.kind is Branch.TAYLOR_AT_ZERO:
        x = float(_taylor_values(ys, n)[0])
    else:
        x = float(_exponential_values(ys, n)[0])
    if clamp:
        x = 0.0 if math.isnan(x) else min(max(x, 0.0), 1.0)
    return x


def series_value(delta, kind, n_terms, center=None):
    """Series evaluated with every draw equal to ``delta`` (no randomness).

    For the exponential series ``center`` plays the role of the first draw.
    """
    n = int(n_terms)
    if kind is Branch.SATURATE_ONE:
        return 1.0
    if kind is Branch.TAYLOR_AT_ZERO:
        coef = taylor_coefficients(n)[:n]
        return float(np.polynomial.polynomial.polyval(delta, coef))
    c = delta if center is None else center
    Y = np.full((1, n), float(delta))
    Y[0, 0] = c
    return float(_exponential_values(Y, n)[0])


def delta_quadrature(bp_theta, bp_z, M):
    """Δ as ∫₀¹ tr(G(t)⁻¹(G_z − G_θ)) dt with dense traces."""
    G0 = gram_sparse(M, bp_theta.weights).entries
    G1 = gram_sparse(M, bp_z.weights).entries
    dG = G1 - G0

    def integrand(t):
        return float(np.trace(np.linalg.solve(G0 + t * dG, dG)))

    val, _ = integrate.quad(integrand, 0.0, 1.0, epsabs=1e-12, epsrel=1e-12, limit=200)
    return val


class SpectralSampler:
    """Draws of Y through a simultaneous diagonalization, O(d) per draw.

    With G_θ = LLᵀ and L⁻¹(G_z − G_θ)L⁻ᵀ = QΛQᵀ, the draw for (v, t) is
    Σₖ aₖbₖλₖ/(1 + tλₖ) where a = QᵀL⁻¹v and b = QᵀLᵀv. This is the same
    random variable as the solver path, used for large Monte-Carlo checks.
    """

    def __init__(self, bp_theta, bp_z, M):
        G0 = gram_sparse(M, bp_theta.weights).entries
        G1 = gram_sparse(M, bp_z.weights).entries
        L = np.linalg.cholesky(G0)
        Linv = np.linalg.inv(L)
        E = Linv @ (G1 - G0) @ Linv.T
        lam, Q = np.linalg.eigh(0.5 * (E + E.T))
        self.lam = lam
        self.left = Q.T @ Linv
        self.right = Q.T @ L.T
        self.delta = float(np.sum(np.log1p(lam)))

    def draw(self, rng, n):
        ts, V = draw_inputs(rng, n, self.left.shape[0])
        return self.from_inputs(ts, V)

    def from_inputs(self, ts, V):
        a = self.left @ V
        b = self.right @ V
        w = self.lam[:, None] / (1.0 + ts[None, :] * self.lam[:, None])
        return np.einsum("kj,kj->j", a * b, w)
