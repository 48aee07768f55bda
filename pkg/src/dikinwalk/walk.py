"""Soft-threshold Dikin walk.

Each step proposes z ~ N(θ, Φ(θ)⁻¹) and, if z is interior, accepts with
probability ½·sigmoid(Δ/2)·min(exp(f(θ) − f(z) + ½‖z−θ‖²_{Φ(θ)} − ½‖θ−z‖²_{Φ(z)}), 1)
where Δ = log det Φ(z) − log det Φ(θ). ``Mode.EXACT`` computes Δ with dense
factorizations; ``Mode.ESTIMATED`` replaces sigmoid(Δ/2) by the series
estimate built from randomized draws.
"""

import enum
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from dikinwalk import logdet_estimator as est
from dikinwalk.barrier import (
    BarrierParams,
    frobenius_ratio,
    local_norm_sq,
    logdet_phi_exact,
    weights_at,
)
from dikinwalk.errors import NotInterior, TargetEvaluationError
from dikinwalk.polytope import contains_interior
from dikinwalk.rng import Streams
from dikinwalk.solver import Backend, initialize, solve, update
from dikinwalk.sparsela import matvec_t


class Regularity(enum.Enum):
    LIPSCHITZ = "lipschitz"
    SMOOTH = "smooth"


@dataclass(frozen=True)
class TargetFunction:
    """f together with its declared regularity constant (L or β)."""

    eval: Callable
    regularity: Regularity
    constant: float
    name: str = "custom"
    # closed-form gradient-free description, used by the harness for serialization
    spec: dict = field(default_factory=dict)

    def __call__(self, theta):
        val = float(self.eval(theta))
        if not math.isfinite(val):
            raise TargetEvaluationError(f"target {self.name} returned {val}")
        return val

    @staticmethod
    def uniform():
        # f ≡ 0 is Lipschitz with any constant; L = 1 keeps η finite
        return TargetFunction(lambda th: 0.0, Regularity.LIPSCHITZ, 1.0, "uniform", {"kind": "uniform"})

    @staticmethod
    def linear(c):
        c = np.array(c, dtype=float)
        c.setflags(write=False)
        L = float(np.linalg.norm(c)) or 1.0
        return TargetFunction(
            lambda th: float(c @ th), Regularity.LIPSCHITZ, L, "linear",
            {"kind": "linear", "c": c.tolist()},
        )

    @staticmethod
    def quadratic(beta, center):
        center = np.array(center, dtype=float)
        center.setflags(write=False)
        beta = float(beta)
        return TargetFunction(
            lambda th: 0.5 * beta * float(np.dot(th - center, th - center)),
            Regularity.SMOOTH, beta, "quadratic",
            {"kind": "quadratic", "beta": beta, "center": center.tolist()},
        )

    @staticmethod
    def logistic(X, y):
        """Negative log-likelihood of logistic regression with labels ±1."""
        X = np.array(X, dtype=float)
        y = np.array(y, dtype=float)
        X.setflags(write=False)
        y.setflags(write=False)
        L = float(np.sum(np.linalg.norm(X, axis=1))) or 1.0
        return TargetFunction(
            lambda th: float(np.sum(np.logaddexp(0.0, -y * (X @ th)))),
            Regularity.LIPSCHITZ, L, "logistic",
            {"kind": "logistic", "X": X.tolist(), "y": y.tolist()},
        )


class Mode(enum.Enum):
    EXACT = "exact"
    ESTIMATED = "estimated"


@dataclass(frozen=True)
class ProfileConstants:
    c_alpha: float
    c_eta: float
    c_T: float
    c_gamma: float


PAPER = ProfileConstants(1e5, 1e4, 1e9, 1e20)
PRACTICAL = ProfileConstants(10.0, 10.0, 50.0, 10.0)
PROFILES = {"paper": PAPER, "practical": PRACTICAL}


@dataclass(frozen=True)
class WalkConfig:
    params: BarrierParams
    gamma: float
    steps: int
    n_samples: int
    mode: Mode = Mode.EXACT
    seed: int = 0
    backend: Backend = Backend.WOODBURY
    k_max: int = 64
    eps_lowrank: float = 1e-3
    thin: int = 1
    profile: str = "practical"
    # test-only fault injection: evaluates the smoothed factor at Δ instead of Δ/2
    mutate_factor: bool = False

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.steps < 0 or self.n_samples < 1 or self.thin < 1:
            raise ValueError("steps >= 0, n_samples >= 1 and thin >= 1 required")
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "backend", Backend(self.backend))

    @property
    def alpha(self):
        return self.params.alpha

    @property
    def eta(self):
        return self.params.eta


def schedule(m, d, R, target, w=10.0, delta=0.1, constants=PRACTICAL):
    """Raw hyperparameters (α, η, γ, T, 𝒩) as a dict."""
    if min(m, d, R, target.constant) <= 0 or w < 1 or not 0 < delta < 1:
        raise ValueError("need positive m, d, R, regularity constant; w >= 1; delta in (0, 1)")
    lw = math.log(w / delta)
    if target.regularity is Regularity.LIPSCHITZ:
        scale = target.constant**2
        gamma = delta * lw**1.02 / (constants.c_gamma * (m * d + scale * R**2))
    else:
        scale = target.constant
        gamma = delta * lw**1.01 / (constants.c_gamma * (m * d + scale * R**2))
    gamma = min(gamma, 0.5)
    alpha = 1.0 / (constants.c_alpha * d * math.log(1.0 / gamma))
    eta = 1.0 / (constants.c_eta * d * scale)
    t_base = constants.c_T * (2 * m / alpha + R**2 / eta) * lw
    steps = math.ceil(t_base * math.log(t_base) ** 1.01)
    return {
        "alpha": alpha,
        "eta": eta,
        "gamma": gamma,
        "steps": steps,
        "n_samples": est.default_sample_count(gamma),
    }


def hyperparams(m, d, R, target, w=10.0, delta=0.1, profile="practical", constants=None, **overrides):
    """WalkConfig from the step-size schedule.

    ``profile`` picks the constant set ("paper" or "practical"); ``constants``
    replaces it outright. Remaining keyword arguments override WalkConfig fields.
    """
    consts = constants if constants is not None else PROFILES[profile]
    h = schedule(m, d, R, target, w, delta, consts)
    cfg = dict(
        params=BarrierParams(h["alpha"], h["eta"]),
        gamma=h["gamma"],
        steps=h["steps"],
        n_samples=h["n_samples"],
        profile=profile if constants is None else "custom",
    )
    cfg.update(overrides)
    return WalkConfig(**cfg)


@dataclass
class Diagnostics:
    steps: int = 0
    accepted: int = 0
    rejected_out_of_K: int = 0
    frobenius_ratios: list = field(default_factory=list)
    branch_counts: dict = field(default_factory=lambda: {b.value: 0 for b in est.Branch})
    step_seconds: list = field(default_factory=list)


@dataclass
class ChainState:
    bp: object
    solver_P: object
    f_value: float
    step_index: int = 0
    diagnostics: Diagnostics = field(default_factory=Diagnostics)
    logdet: float = None

    @property
    def theta(self):
        return self.bp.theta


def init_state(polytope, config, target, theta0):
    theta0 = np.asarray(theta0, dtype=float)
    if not contains_interior(polytope, theta0):
        raise NotInterior("initial point is not strictly interior")
    bp = weights_at(polytope, config.params, theta0)
    P = initialize(bp.weights, polytope.augmented, config.backend, config.k_max, config.eps_lowrank)
    return ChainState(bp, P, target(theta0))


def propose(state, params, rng=None, xi=None):
    """z = θ + √α·(ÂᵀDÂ)⁻¹ÂᵀD^{1/2}ξ with ξ standard normal in m+d dimensions."""
    bp = state.bp
    M = bp.polytope.augmented
    if xi is None:
        xi = rng.standard_normal(M.n_rows)
    u = matvec_t(M, np.sqrt(bp.weights) * xi)
    return bp.theta + math.sqrt(params.alpha) * solve(u, bp.weights, M, state.solver_P)


def _log_exp_term(state, bp_z, f_z, params):
    u = bp_z.theta - state.bp.theta
    return (
        state.f_value
        - f_z
        + 0.5 * local_norm_sq(state.bp, params, u)
        - 0.5 * local_norm_sq(bp_z, params, u)
    )


def _logdet(state, params):
    if state.logdet is None:
        state.logdet = logdet_phi_exact(state.bp, params)
    return state.logdet


def _factor_exact(delta, mutate=False):
    return float(est.sigmoid_half(2.0 * delta if mutate else delta))


def accept_prob_exact(state, z, params, target, bp_z=None, f_z=None, mutate=False, _logdet_z=None):
    """Acceptance probability with dense log-determinants. Lies in [0, ½]."""
    if bp_z is None:
        if not contains_interior(state.bp.polytope, z):
            raise NotInterior("proposal is not interior")
        bp_z = weights_at(state.bp.polytope, params, z)
    if f_z is None:
        f_z = target(bp_z.theta)
    ld_z = logdet_phi_exact(bp_z, params) if _logdet_z is None else _logdet_z
    delta = ld_z - _logdet(state, params)
    log_mh = _log_exp_term(state, bp_z, f_z, params)
    return 0.5 * _factor_exact(delta, mutate) * math.exp(min(log_mh, 0.0))


@dataclass(frozen=True)
class EstimatedDecision:
    accepted: bool
    probability: float
    factor: float
    branch: est.Branch
    ys: np.ndarray


def accept_prob_estimated(state, z, params, target, rng, n_samples, gamma, u=None, bp_z=None, f_z=None):
    """Bernoulli decision using the series estimate of sigmoid(Δ/2).

    ``rng`` feeds the 𝒩 estimator draws. ``u`` is the uniform used for the
    final coin; it is drawn from ``rng`` after the estimator if not given.
    """
    if bp_z is None:
        if not contains_interior(state.bp.polytope, z):
            raise NotInterior("proposal is not interior")
        bp_z = weights_at(state.bp.polytope, params, z)
    if f_z is None:
        f_z = target(bp_z.theta)
    M = state.bp.polytope.augmented
    ys = est.sample_deltas(state.bp, bp_z, M, state.solver_P, n_samples, rng)
    branch = est.select_branch(float(ys[0]), gamma, n_samples)
    x = est.estimate_factor(ys, branch, n_samples)
    p = 0.5 * x * math.exp(min(_log_exp_term(state, bp_z, f_z, params), 0.0))
    if u is None:
        u = rng.random()
    return EstimatedDecision(bool(u < p), p, x, branch.kind, ys)


def step(state, config, target, streams):
    """Advance one step in place and return the state."""
    k = state.step_index
    diag = state.diagnostics
    params = config.params
    P = state.bp.polytope
    z = propose(state, params, streams.generator(k, "propose"))
    u = streams.generator(k, "accept").random()
    state.step_index += 1
    diag.steps += 1
    if not contains_interior(P, z):
        diag.rejected_out_of_K += 1
        return state
    bp_z = weights_at(P, params, z)
    f_z = target(z)
    ld_z = None
    if config.mode is Mode.EXACT:
        ld_z = logdet_phi_exact(bp_z, params)
        p = accept_prob_exact(state, z, params, target, bp_z, f_z, config.mutate_factor, ld_z)
        accepted = u < p
    else:
        dec = accept_prob_estimated(
            state, z, params, target, streams.generator(k, "estimate"),
            config.n_samples, config.gamma, u=u, bp_z=bp_z, f_z=f_z,
        )
        diag.branch_counts[dec.branch.value] += 1
        accepted = dec.accepted
    if accepted:
        diag.accepted += 1
        diag.frobenius_ratios.append(frobenius_ratio(state.bp, bp_z))
        update(bp_z.weights, P.augmented, state.solver_P)
        state.bp = bp_z
        state.f_value = f_z
        state.logdet = ld_z
    return state


@dataclass
class RunResult:
    samples: np.ndarray
    final: np.ndarray
    diagnostics: Diagnostics
    solver_stats: object
    config: WalkConfig

    @property
    def acceptance_rate(self):
        return self.diagnostics.accepted / max(self.diagnostics.steps, 1)

    @property
    def out_of_K_rate(self):
        return self.diagnostics.rejected_out_of_K / max(self.diagnostics.steps, 1)

    def report(self):
        fr = np.asarray(self.diagnostics.frobenius_ratios, dtype=float)
        ts = np.asarray(self.diagnostics.step_seconds, dtype=float)
        q = (lambda a, p: float(np.quantile(a, p)) if a.size else 0.0)
        return {
            "steps": self.diagnostics.steps,
            "acceptance_rate": self.acceptance_rate,
            "out_of_K_rate": self.out_of_K_rate,
            "frobenius_ratio_mean": float(fr.mean()) if fr.size else 0.0,
            "frobenius_ratio_max": float(fr.max()) if fr.size else 0.0,
            "frobenius_ratio_q50": q(fr, 0.5),
            "frobenius_ratio_q99": q(fr, 0.99),
            "branch_counts": dict(self.diagnostics.branch_counts),
            "refactorizations": self.solver_stats.refactorizations,
            "lowrank_updates": self.solver_stats.lowrank_updates,
            "solves": self.solver_stats.solves,
            "wall_time_per_step_mean": float(ts.mean()) if ts.size else 0.0,
            "wall_time_per_step_median": float(np.median(ts)) if ts.size else 0.0,
        }


def run(config, polytope, target, theta0=None, record=True, timing=False):
    """Run ``config.steps`` steps from ``theta0`` (default: the polytope's witness).

    Samples are the iterates after every ``config.thin``-th step.
    """
    theta0 = polytope.witness if theta0 is None else theta0
    state = init_state(polytope, config, target, theta0)
    streams = Streams(config.seed)
    n_keep = config.steps // config.thin if record else 0
    samples = np.empty((n_keep, polytope.d))
    clock = time.perf_counter
    for i in range(config.steps):
        if timing:
            t0 = clock()
            step(state, config, target, streams)
            state.diagnostics.step_seconds.append(clock() - t0)
        else:
            step(state, config, target, streams)
        if record and (i + 1) % config.thin == 0:
            samples[(i + 1) // config.thin - 1] = state.bp.theta
    return RunResult(samples, state.bp.theta.copy(), state.diagnostics, state.solver_P.stats, config)


def with_overrides(config, **kw):
    if "alpha" in kw or "eta" in kw:
        kw["params"] = BarrierParams(kw.pop("alpha", config.alpha), kw.pop("eta", config.eta))
    return replace(config, **kw)
