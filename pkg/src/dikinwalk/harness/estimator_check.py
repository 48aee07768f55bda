"""Empirical checks of the log-determinant estimator on one small instance."""

import math

import numpy as np

from dikinwalk import logdet_estimator as est
from dikinwalk.barrier import frobenius_ratio, logdet_phi_exact, weights_at
from dikinwalk.errors import ConfigError
from dikinwalk.polytope import contains_interior
from dikinwalk.rng import Streams
from dikinwalk.solver import initialize
from dikinwalk.walk import ChainState, TargetFunction, hyperparams, propose

MAX_DIM = 6
TAIL_S = (8, 16, 24)
CHUNK = 4096


def instance_pair(P, params, seed, zero_delta=False, max_tries=1000):
    """(θ, z): θ is the witness and z the first interior proposal from it."""
    bp = weights_at(P, params, P.witness)
    if zero_delta:
        return bp, bp
    state = ChainState(bp, initialize(bp.weights, P.augmented), 0.0)
    streams = Streams(seed)
    for k in range(max_tries):
        z = propose(state, params, streams.generator(k, "test"))
        if contains_interior(P, z):
            return bp, weights_at(P, params, z)
    raise RuntimeError("no interior proposal found")


def draw_ys(bp_theta, bp_z, n, seed, offset=0):
    """``n`` estimator draws; chunk k uses the test stream at step ``offset + k``."""
    M = bp_theta.polytope.augmented
    solver = initialize(bp_theta.weights, M)
    streams = Streams(seed)
    out = []
    for k, lo in enumerate(range(0, n, CHUNK)):
        rng = streams.generator(offset + k, "test", j=1)
        out.append(est.sample_deltas(bp_theta, bp_z, M, solver, min(CHUNK, n - lo), rng))
    return np.concatenate(out) if out else np.empty(0)


def tail_report(ys, delta, c):
    n = len(ys)
    rows = {}
    for s in TAIL_S:
        bound = 2.0 * math.exp(-s / 8.0)
        freq = float(np.mean(np.abs(ys - delta) >= s * c)) if c > 0 else 0.0
        se = math.sqrt(min(bound, 1.0) * max(1.0 - bound, 0.0) / n)
        rows[str(s)] = {"frequency": freq, "bound": bound, "slack": 3.0 * se, "pass": bool(freq <= bound + 3.0 * se)}
    return rows


def estimator_check(P, seed=0, n_draws=100_000, gamma=1e-3, n_runs=2000, zero_delta=False, params=None):
    """Bias of Y, its tails and the accuracy of the smoothed factor on one pair."""
    if P.d > MAX_DIM:
        raise ConfigError("polytope", f"estimator check needs d <= {MAX_DIM}, got {P.d}")
    if params is None:
        params = hyperparams(P.m, P.d, P.radius, TargetFunction.uniform()).params
    bp_t, bp_z = instance_pair(P, params, seed, zero_delta)
    delta = logdet_phi_exact(bp_z, params) - logdet_phi_exact(bp_t, params)
    c = frobenius_ratio(bp_t, bp_z)

    ys = draw_ys(bp_t, bp_z, n_draws, seed)
    mean_y = float(ys.mean())
    se_y = float(ys.std(ddof=1) / math.sqrt(n_draws)) if n_draws > 1 else math.inf
    err_y = abs(mean_y - delta)

    n_terms = est.default_sample_count(gamma)
    yx = draw_ys(bp_t, bp_z, n_runs * n_terms, seed, offset=1 << 20).reshape(n_runs, n_terms)
    xs = est.estimate_factor_batch(yx, gamma, n_terms)
    mean_x = float(xs.mean())
    se_x = float(xs.std(ddof=1) / math.sqrt(n_runs)) if n_runs > 1 else math.inf
    target = float(est.sigmoid_half(delta))
    err_x = abs(mean_x - target)

    tails = tail_report(ys, delta, c)
    # with Δ = 0 every draw is exactly zero, so the standard error vanishes
    y_pass = bool(err_y <= max(4.0 * se_y, 1e-12))
    x_pass = bool(err_x <= gamma + 3.0 * se_x + 1e-12)
    return {
        "d": P.d,
        "m": P.m,
        "delta_exact": float(delta),
        "frobenius_ratio": c,
        "y": {"draws": n_draws, "mean": mean_y, "standard_error": se_y, "abs_error": err_y, "pass": y_pass},
        "tails": tails,
        "x": {
            "runs": n_runs,
            "gamma": gamma,
            "n_samples": n_terms,
            "mean": mean_x,
            "standard_error": se_x,
            "target": target,
            "abs_error": err_x,
            "pass": x_pass,
        },
        "passed": bool(y_pass and x_pass and all(t["pass"] for t in tails.values())),
    }
