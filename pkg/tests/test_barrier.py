import numpy as np
import pytest
import scipy.linalg as sla

from conftest import interior_point, random_polytope
from dikinwalk.barrier import (
    BarrierParams,
    frobenius_ratio,
    local_norm_sq,
    logdet_phi_exact,
    phi_dense,
    weights_at,
)
from dikinwalk.errors import NotInterior
from dikinwalk.polytope import Polytope, build_hypercube
from dikinwalk.solver import frobenius_change
from dikinwalk.sparsela import SparseMatrix, gram

UNIT = BarrierParams(1.0, 1.0)


def dense_phi(P, params, theta):
    A = P.A.to_dense()
    s = P.b - A @ theta
    H = (A / s[:, None] ** 2).T @ A
    return H / params.alpha + np.eye(P.d) / params.eta


def test_weights_center():
    bp = weights_at(build_hypercube(2, 1.0), UNIT, np.zeros(2))
    np.testing.assert_array_equal(bp.weights, np.ones(6))


def test_weights_off_center():
    bp = weights_at(build_hypercube(2, 1.0), UNIT, np.array([0.5, 0.0]))
    np.testing.assert_allclose(bp.weights[:2], [1 / 0.25, 1 / 2.25])
    np.testing.assert_allclose(bp.weights[2:], 1.0)


def test_weights_regularizer_rows():
    params = BarrierParams(0.3, 2.0)
    bp = weights_at(build_hypercube(3, 1.0), params, np.zeros(3))
    np.testing.assert_allclose(bp.weights[6:], 0.15)


def test_weights_reject_exterior():
    P = build_hypercube(2, 1.0)
    with pytest.raises(NotInterior):
        weights_at(P, UNIT, np.array([1.0, 0.0]))
    with pytest.raises(NotInterior):
        weights_at(P, UNIT, np.array([3.0, 0.0]))


def test_gram_matches_dense_hessian(rng):
    P = random_polytope(rng, 4, 6)
    params = BarrierParams(0.07, 3.0)
    th = interior_point(rng, P)
    bp = weights_at(P, params, th)
    got = gram(P.augmented, bp.weights).entries / params.alpha
    np.testing.assert_allclose(got, dense_phi(P, params, th), rtol=1e-12)


def test_local_norm_zero():
    bp = weights_at(build_hypercube(2, 1.0), UNIT, np.zeros(2))
    assert local_norm_sq(bp, UNIT, np.zeros(2)) == 0.0


def test_local_norm_hand():
    bp = weights_at(build_hypercube(2, 1.0), UNIT, np.zeros(2))
    assert local_norm_sq(bp, UNIT, np.array([1.0, 0.0])) == pytest.approx(3.0)


def test_local_norm_dense(rng):
    P = random_polytope(rng, 5, 7)
    params = BarrierParams(0.2, 0.5)
    th = interior_point(rng, P)
    u = rng.standard_normal(5)
    ref = u @ dense_phi(P, params, th) @ u
    assert local_norm_sq(weights_at(P, params, th), params, u) == pytest.approx(ref, rel=1e-12)


def test_logdet_interval():
    P = Polytope(SparseMatrix.from_dense([[1.0], [-1.0]]), np.ones(2), 1.0, np.zeros(1))
    assert logdet_phi_exact(weights_at(P, UNIT, np.zeros(1)), UNIT) == pytest.approx(np.log(3.0))


def test_logdet_slack_homogeneity():
    # on a cube of half-width c the barrier Hessian at the center is c⁻² times the unit one
    params = BarrierParams(1.0, 1e12)
    l1 = logdet_phi_exact(weights_at(build_hypercube(3, 1.0), params, np.zeros(3)), params)
    l2 = logdet_phi_exact(weights_at(build_hypercube(3, 2.0), params, np.zeros(3)), params)
    assert l2 - l1 == pytest.approx(3 * np.log(0.25), rel=1e-9)


def test_logdet_against_eigenvalues(rng):
    P = random_polytope(rng, 5, 9)
    params = BarrierParams(0.1, 0.4)
    th = interior_point(rng, P)
    ref = np.sum(np.log(np.linalg.eigvalsh(dense_phi(P, params, th))))
    assert logdet_phi_exact(weights_at(P, params, th), params) == pytest.approx(ref, rel=1e-10)


def test_frobenius_ratio_identity():
    bp = weights_at(build_hypercube(2, 1.0), UNIT, np.zeros(2))
    assert frobenius_ratio(bp, bp) == 0.0


def test_frobenius_ratio_hand():
    # slacks (1, 1) → (1, 2) on an interval: the second row contributes |1/4 − 1|
    P = Polytope(SparseMatrix.from_dense([[1.0], [-1.0]]), np.array([1.0, 1.0]), 5.0, np.zeros(1))
    Q = Polytope(P.A, np.array([1.0, 2.0]), 5.0, np.zeros(1))
    a = weights_at(P, UNIT, np.zeros(1))
    b = weights_at(Q, UNIT, np.zeros(1))
    assert frobenius_ratio(a, b) == pytest.approx(np.sqrt(9 / 16))


def test_frobenius_ratio_matches_change(rng):
    P = random_polytope(rng, 3, 4)
    a = weights_at(P, UNIT, interior_point(rng, P))
    b = weights_at(P, UNIT, interior_point(rng, P))
    assert frobenius_ratio(a, b) == np.sqrt(frobenius_change(a.weights, b.weights))


def test_phi_floor(rng):
    for _ in range(50):
        d = int(rng.integers(1, 6))
        P = random_polytope(rng, d, int(rng.integers(0, 8)))
        params = BarrierParams(10 ** rng.uniform(-3, 1), 10 ** rng.uniform(-3, 1))
        th = interior_point(rng, P)
        lam = np.linalg.eigvalsh(phi_dense(weights_at(P, params, th), params)).min()
        assert lam >= (1 - 1e-10) / params.eta


def _pair(rng):
    d = int(rng.integers(1, 7))
    P = random_polytope(rng, d, int(rng.integers(0, 10)))
    params = BarrierParams(10 ** rng.uniform(-2, 0), 10 ** rng.uniform(-2, 2))
    th = interior_point(rng, P)
    psi = params.alpha * dense_phi(P, params, th)
    u = rng.standard_normal(d)
    u *= rng.uniform(0, 0.98) / np.sqrt(u @ psi @ u)
    z = th + u
    r = np.sqrt(u @ psi @ u)
    psi_z = params.alpha * dense_phi(P, params, z)
    w, V = np.linalg.eigh(psi)
    root = (V / np.sqrt(w)) @ V.T
    lhs = np.linalg.norm(root @ (psi_z - psi) @ root, "fro")
    ratio = frobenius_ratio(weights_at(P, params, th), weights_at(P, params, z))
    return r, lhs, ratio


def test_frobenius_ratio_dominates_hessian_change(rng):
    """The relative Hessian change is a Schur-compressed view of the weight change.

    With Q the leverage Gram matrix (Q ⪯ I), ‖Ψ^{-1/2}(Ψ(z)−Ψ(θ))Ψ^{-1/2}‖²_F = eᵀ(Q∘Q)e ≤ ‖e‖².
    """
    for _ in range(300):
        _, lhs, ratio = _pair(rng)
        assert lhs <= ratio * (1 + 1e-10) + 1e-14


def test_weight_change_bounded_by_local_step(rng):
    """|eᵢ| = |1/(1−xᵢ)² − 1| ≤ |xᵢ|(2+r)/(1−r)² with Σxᵢ² ≤ r²."""
    for _ in range(300):
        r, lhs, ratio = _pair(rng)
        bound = r * (2 + r) / (1 - r) ** 2
        assert ratio <= bound * (1 + 1e-10)
        assert lhs <= bound * (1 + 1e-10)


def test_hessian_change_can_exceed_unit_constant_bound():
    # one dominant constraint: the relative change is about 2r, above r/(1−r)²
    P = Polytope(SparseMatrix.from_dense([[1.0], [-1.0]]), np.ones(2), 1.0, np.zeros(1))
    params = BarrierParams(1.0, 1e12)
    th, z = np.array([0.9]), np.array([0.91])
    psi = params.alpha * dense_phi(P, params, th)[0, 0]
    psi_z = params.alpha * dense_phi(P, params, z)[0, 0]
    r = np.sqrt(psi) * 0.01
    assert abs(psi_z - psi) / psi > r / (1 - r) ** 2
