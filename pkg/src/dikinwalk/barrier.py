"""Regularized log-barrier geometry.

The weight diagonal D(θ) has entries 1/sᵢ² on constraint rows and α/η on the
identity rows of Â, so that Φ(θ) = α⁻¹ÂᵀD(θ)Â = α⁻¹H(θ) + η⁻¹I.
"""

from dataclasses import dataclass

import numpy as np

from dikinwalk.errors import NotInterior
from dikinwalk.polytope import slack
from dikinwalk.sparsela import gram, logdet_dense, matvec

MIN_SLACK = 1e-300


@dataclass(frozen=True)
class BarrierParams:
    alpha: float
    eta: float

    def __post_init__(self):
        a, e = float(self.alpha), float(self.eta)
        if not (a > 0 and e > 0 and np.isfinite(a) and np.isfinite(e) and np.isfinite(a / e)):
            raise ValueError("alpha and eta must be positive and finite")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "eta", e)


@dataclass(frozen=True, eq=False)
class BarrierPoint:
    theta: np.ndarray
    slacks: np.ndarray
    weights: np.ndarray
    polytope: object
    params: BarrierParams


def weights_at(P, params, theta):
    theta = np.array(theta, dtype=np.float64)
    s = slack(P, theta)
    if not np.all(s > MIN_SLACK) or not np.all(np.isfinite(theta)):
        raise NotInterior("point is not strictly interior")
    w = np.empty(P.m + P.d)
    w[: P.m] = 1.0 / (s * s)
    w[P.m :] = params.alpha / params.eta
    theta.setflags(write=False)
    s.setflags(write=False)
    w.setflags(write=False)
    return BarrierPoint(theta, s, w, P, params)


def local_norm_sq(bp, params, u):
    """‖u‖²_{Φ(θ)} = α⁻¹·Σᵢ Dᵢ·(Âu)ᵢ²."""
    au = matvec(bp.polytope.augmented, u)
    return float(np.dot(bp.weights, au * au)) / params.alpha


def phi_dense(bp, params):
    return gram(bp.polytope.augmented, bp.weights).entries / params.alpha


def logdet_phi_exact(bp, params):
    return logdet_dense(gram(bp.polytope.augmented, bp.weights)) - bp.polytope.d * np.log(params.alpha)


def frobenius_ratio(bp_from, bp_to):
    """‖D(θ)⁻¹D(z) − I‖_F over all m+d rows."""
    r = bp_to.weights / bp_from.weights - 1.0
    return float(np.sqrt(np.dot(r, r)))
