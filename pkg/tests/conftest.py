import numpy as np
import pytest

from dikinwalk.polytope import Polytope
from dikinwalk.sparsela import SparseMatrix


def random_polytope(rng, d, m_extra, sparse=False):
    """Box [−1,1]^d plus ``m_extra`` random rows with offsets ≥ 0.5 (origin interior)."""
    rows = [np.eye(d), -np.eye(d)]
    if m_extra:
        R = rng.standard_normal((m_extra, d))
        if sparse:
            R *= rng.random((m_extra, d)) < 0.5
        rows.append(R)
    A = np.vstack(rows)
    b = np.concatenate([np.ones(2 * d), 0.5 + rng.random(m_extra)])
    return Polytope(SparseMatrix.from_dense(A), b, np.sqrt(d), np.zeros(d))


def interior_point(rng, P, shrink=0.7):
    """Random point strictly inside P (rejection from the box, pulled toward the origin)."""
    while True:
        x = rng.uniform(-1, 1, P.d) * shrink
        if np.all(P.b - P.A.dense @ x > 0.05):
            return x


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
