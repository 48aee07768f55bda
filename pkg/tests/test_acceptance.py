"""One pass/fail test per acceptance criterion, at the stated tolerances."""

import csv
import io
import itertools
import json
import math
import time

import numpy as np
import pytest

from conftest import interior_point, random_polytope
from dikinwalk.barrier import BarrierParams, frobenius_ratio, logdet_phi_exact, phi_dense, weights_at
from dikinwalk.errors import StaleState
from dikinwalk.harness import bench, cli
from dikinwalk.harness.validation import reference, validate
from dikinwalk.logdet_estimator import (
    delta_quadrature,
    default_sample_count,
    estimate_factor_batch,
    sample_deltas,
    sigmoid_half,
)
from dikinwalk.polytope import (
    build_hypercube,
    build_l1_ball,
    build_polygon,
    build_simplex,
    build_sparse_corpus,
    contains_interior,
)
from dikinwalk.rng import Streams
from dikinwalk.solver import Backend, initialize, solve, update
from dikinwalk.sparsela import gram
from dikinwalk.walk import (
    PAPER,
    Mode,
    ProfileConstants,
    TargetFunction,
    accept_prob_estimated,
    accept_prob_exact,
    hyperparams,
    init_state,
    propose,
    run,
    schedule,
    step,
)

UNIFORM = TargetFunction.uniform()
# practical profile with its config-exposed step-size constants set for a 2-d run
PRACTICAL_2D = ProfileConstants(0.1, 0.1, 50.0, 10.0)


def test_c01_uniform_stationary_law():
    P = build_hypercube(2, 1.0)
    cfg = hyperparams(P.m, P.d, P.radius, UNIFORM, constants=PRACTICAL_2D, steps=200_000, seed=2)
    t0 = time.perf_counter()
    res = run(cfg, P, UNIFORM)
    elapsed = time.perf_counter() - t0
    s = res.samples
    assert np.max(np.abs(s.mean(axis=0))) <= 0.05
    assert np.max(np.abs((s**2).mean(axis=0) - 1 / 3)) <= 0.05
    rep = validate(s, P, UNIFORM)
    assert rep["grid_tv"] <= 0.1
    assert elapsed <= 120.0


@pytest.mark.parametrize("L", [1.0, 4.0])
def test_c02_lipschitz_stationary_law(L):
    P = build_hypercube(1, 1.0)
    f = TargetFunction.linear([L])
    ref = reference(P, f)
    # density ∝ exp(−Lθ) on [−1, 1] has mean 1/L − coth(L)
    assert ref.mean[0] == pytest.approx(1 / L - 1 / math.tanh(L), abs=1e-12)
    cfg = hyperparams(P.m, P.d, P.radius, f, constants=PRACTICAL_2D, steps=100_000, seed=3)
    t0 = time.perf_counter()
    res = run(cfg, P, f)
    elapsed = time.perf_counter() - t0
    assert abs(res.samples.mean() - ref.mean[0]) <= 0.05
    assert elapsed <= 60.0


def _estimator_instances(seed, count=10):
    """Random (polytope, θ, z) with d ≤ 6, m ≤ 30 and z a Dikin proposal from θ."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        d = int(rng.integers(1, 7))
        P = random_polytope(rng, d, int(rng.integers(0, 30 - 2 * d + 1)))
        params = BarrierParams(10 ** rng.uniform(-1.5, 0), 10 ** rng.uniform(-1, 1))
        th = interior_point(rng, P)
        Phi = phi_dense(weights_at(P, params, th), params)
        z = th + np.linalg.solve(np.linalg.cholesky(Phi).T, rng.standard_normal(d))
        if contains_interior(P, z):
            out.append((P, params, weights_at(P, params, th), weights_at(P, params, z)))
    return out


def test_c03_estimator_mean():
    rng = np.random.default_rng(303)
    n = 100_000
    for P, params, bt, bz in _estimator_instances(30):
        assert P.d <= 6 and P.m <= 30
        delta = logdet_phi_exact(bz, params) - logdet_phi_exact(bt, params)
        M = P.augmented
        solver = initialize(bt.weights, M)
        ys = np.concatenate([sample_deltas(bt, bz, M, solver, 10_000, rng) for _ in range(n // 10_000)])
        se = ys.std(ddof=1) / math.sqrt(n)
        assert abs(ys.mean() - delta) <= 4 * se
        assert abs(delta_quadrature(bt, bz, M) - delta) <= 1e-6


def test_c04_estimator_concentration():
    rng = np.random.default_rng(404)
    n = 100_000
    checked = 0
    for P, params, bt, bz in _estimator_instances(40, count=30):
        W = bz.weights / bt.weights
        if not (np.all(W >= 0.5) and np.all(W <= 2.0)):
            continue
        checked += 1
        delta = logdet_phi_exact(bz, params) - logdet_phi_exact(bt, params)
        c = frobenius_ratio(bt, bz)
        M = P.augmented
        ys = sample_deltas(bt, bz, M, initialize(bt.weights, M), n, rng)
        for s in (8, 16, 24):
            bound = 2 * math.exp(-s / 8)
            freq = np.mean(np.abs(ys - delta) >= s * c)
            assert freq <= bound + 3 * math.sqrt(min(bound, 1) * max(1 - bound, 0) / n)
    assert checked >= 10


@pytest.mark.parametrize("delta", [0.0, 0.3, 1.0, 5.0, 30.0])
def test_c05_smoothed_factor_accuracy(delta):
    """Draws are Δ plus centred χ²₄ noise of scale 0.1, a skewed law like the quadratic-form draws."""
    gamma = 1e-3
    n = default_sample_count(gamma)
    assert n == math.ceil(10 * math.log(1 / gamma))
    rng = np.random.default_rng(505)
    runs, chunk = 1_000_000, 100_000
    xs = []
    for _ in range(runs // chunk):
        noise = (rng.chisquare(4, size=(chunk, n)) - 4) / math.sqrt(8)
        xs.append(estimate_factor_batch(delta + 0.1 * noise, gamma, n))
    xs = np.concatenate(xs)
    se = xs.std() / math.sqrt(runs)
    assert abs(xs.mean() - sigmoid_half(delta)) <= gamma + 3 * se


def _log_q(bp, params, z):
    Phi = phi_dense(bp, params)
    u = z - bp.theta
    return 0.5 * np.linalg.slogdet(Phi)[1] - 0.5 * u @ Phi @ u


def test_c06_detailed_balance():
    rng = np.random.default_rng(606)
    corpus = [build_hypercube(3), build_simplex(3), build_l1_ball(3), build_polygon(16), build_sparse_corpus(4)]
    # an acceptance probability of exactly 0 means it fell below the smallest subnormal double
    log_tiny = math.log(5e-324)
    pairs = 0
    worst = 0.0
    while pairs < 1000:
        P = corpus[pairs % len(corpus)]
        f = TargetFunction.linear(rng.standard_normal(P.d))
        cfg = hyperparams(P.m, P.d, P.radius, f, constants=PRACTICAL_2D)
        th = P.witness + 0.5 * rng.uniform(-1, 1, P.d) * np.min(P.b - P.A.dense @ P.witness)
        if not contains_interior(P, th):
            continue
        a = init_state(P, cfg, f, th)
        z = propose(a, cfg.params, rng)
        if not contains_interior(P, z):
            continue
        b = init_state(P, cfg, f, z)
        pa = accept_prob_exact(a, z, cfg.params, f)
        pb = accept_prob_exact(b, th, cfg.params, f)
        base_a = _log_q(a.bp, cfg.params, z) - f(th)
        base_b = _log_q(b.bp, cfg.params, th) - f(z)
        if pa > 0 and pb > 0:
            worst = max(worst, abs(math.expm1(math.log(pa) + base_a - math.log(pb) - base_b)))
        elif pa > 0:
            assert math.log(pa) + base_a - base_b <= log_tiny + 1e-10
        elif pb > 0:
            assert math.log(pb) + base_b - base_a <= log_tiny + 1e-10
        pairs += 1
    assert worst <= 1e-10


def test_c07_self_concordance_and_sandwich():
    rng = np.random.default_rng(707)
    change_violations = sandwich_violations = 0
    for _ in range(1000):
        d = int(rng.integers(1, 7))
        P = random_polytope(rng, d, int(rng.integers(0, 10)))
        params = BarrierParams(10 ** rng.uniform(-2, 0), 10 ** rng.uniform(-2, 2))
        th = interior_point(rng, P)
        psi = params.alpha * phi_dense(weights_at(P, params, th), params)
        u = rng.standard_normal(d)
        u *= rng.uniform(0, 0.98) / math.sqrt(u @ psi @ u)
        z = th + u
        if not contains_interior(P, z):
            continue
        r = math.sqrt(u @ psi @ u)
        psi_z = params.alpha * phi_dense(weights_at(P, params, z), params)
        w, V = np.linalg.eigh(psi)
        root = (V / np.sqrt(w)) @ V.T
        change = np.linalg.norm(root @ (psi_z - psi) @ root, "fro")
        ratio = frobenius_ratio(weights_at(P, params, th), weights_at(P, params, z))
        change_violations += change > r / (1 - r) ** 2 * (1 + 1e-12)
        sandwich_violations += ratio > change * (1 + 1e-12)
    assert (change_violations, sandwich_violations) == (0, 0)


def test_c08_solver_fidelity():
    rng = np.random.default_rng(808)
    for P in (build_sparse_corpus(30), build_hypercube(8), build_simplex(6)):
        M = P.augmented
        C = 1.0 + rng.random(M.n_rows)
        state = initialize(C, M, Backend.WOODBURY, k_max=32)
        for _ in range(50):
            # per-update relative change with Frobenius norm at most 1
            e = rng.standard_normal(M.n_rows) * (rng.random(M.n_rows) < 0.2)
            e *= rng.uniform(0.1, 1.0) / max(np.linalg.norm(e), 1e-300)
            e = np.clip(e, -0.9, None)
            C = C * (1 + e)
            update(C, M, state)
            v = rng.standard_normal(M.n_cols)
            got = solve(v, C, M, state)
            ref = np.linalg.solve(gram(M, C).entries, v)
            assert np.linalg.norm(got - ref) <= 1e-8 * np.linalg.norm(ref)
        with pytest.raises(StaleState):
            solve(v, C * 1.5, M, state)


def test_c09_mode_coupling():
    """Along one exact chain, both rules decide each step from the same proposal and uniform."""
    P = build_hypercube(2, 1.0)
    h = schedule(P.m, P.d, P.radius, UNIFORM, constants=PAPER)
    gamma = 1e-8
    n = default_sample_count(gamma)
    cfg = hyperparams(P.m, P.d, P.radius, UNIFORM, profile="paper", gamma=gamma, n_samples=n, steps=1000, seed=9)
    assert cfg.alpha == h["alpha"] and cfg.eta == h["eta"]
    state = init_state(P, cfg, UNIFORM, P.witness)
    streams = Streams(cfg.seed)
    agree = total = 0
    for k in range(cfg.steps):
        z = propose(state, cfg.params, streams.generator(k, "propose"))
        u = streams.generator(k, "accept").random()
        if contains_interior(P, z):
            exact = u < accept_prob_exact(state, z, cfg.params, UNIFORM)
            est = accept_prob_estimated(state, z, cfg.params, UNIFORM, streams.generator(k, "estimate"),
                                        n, gamma, u=u).accepted
            agree += exact == est
        else:
            agree += 1
        total += 1
        step(state, cfg, UNIFORM, streams)
    assert agree / total >= 0.99


def test_c10_scaling_benchmark():
    bench.tune_allocator()
    dims = [50, 100, 200, 400]
    fast, ref = [], []
    for d in dims:
        fast.append(bench.run_cell(d, Backend.WOODBURY, Mode.ESTIMATED, steps=20)["time_per_step_median"])
        ref.append(bench.run_cell(d, Backend.EXACT, Mode.EXACT, steps=20)["time_per_step_median"])
        P = build_sparse_corpus(d)
        assert P.m == 4 * d and P.A.nnz <= 8 * d
    assert bench.fit_exponent(dims, fast) < 2.5
    assert ref[-1] >= 3.0 * fast[-1], f"speedup at d=400 is {ref[-1] / fast[-1]:.2f}"


def _drop_timing(text):
    rows = list(csv.DictReader(io.StringIO(text)))
    return [{k: v for k, v in r.items() if k not in bench.TIMING_COLUMNS} for r in rows]


def test_c11_determinism(tmp_path, capsys):
    manifest = tmp_path / "m.json"
    manifest.write_text(json.dumps({
        "polytope": "simplex:3", "target": "linear:1,-0.5,0.25", "seed": 42,
        "config": {"steps": 2000, "mode": "estimated"},
    }))
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert cli.main(["sample", "--manifest", str(manifest), "--out", str(out)]) == cli.EXIT_OK
        assert cli.main(["bench", "--dims", "8,16", "--steps", "5", "--out", str(out)]) == cli.EXIT_OK
        outs.append(out)
    capsys.readouterr()
    a, b = outs
    for name in ("samples.jsonl", "metrics.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert _drop_timing((a / "bench.csv").read_text()) == _drop_timing((b / "bench.csv").read_text())
