"""Polytopes {θ : Aθ ≤ b} with positive slacks s = b − Aθ."""

import json
from dataclasses import dataclass
from functools import cached_property
from itertools import product

import numpy as np

from dikinwalk.errors import DimensionMismatch, NotInterior, UnsupportedDimension
from dikinwalk.sparsela import SparseMatrix, matvec

L1_MAX_DIM = 16


@dataclass(frozen=True, eq=False)
class Polytope:
    A: SparseMatrix
    b: np.ndarray
    radius: float
    witness: np.ndarray

    def __post_init__(self):
        b = np.ascontiguousarray(self.b, dtype=np.float64)
        w = np.ascontiguousarray(self.witness, dtype=np.float64)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "witness", w)
        object.__setattr__(self, "radius", float(self.radius))
        if b.shape != (self.A.n_rows,):
            raise DimensionMismatch("b must have one entry per constraint")
        if w.shape != (self.A.n_cols,):
            raise DimensionMismatch("witness must have length d")
        if not np.all(np.isfinite(b)):
            raise ValueError("b must be finite")
        if not (self.radius > 0 and np.isfinite(self.radius)):
            raise ValueError("radius must be positive")
        if not contains_interior(self, w):
            raise NotInterior("witness is not strictly interior")
        if np.linalg.norm(w) > self.radius:
            raise ValueError("witness lies outside the declared radius")

    @property
    def m(self):
        return self.A.n_rows

    @property
    def d(self):
        return self.A.n_cols

    @cached_property
    def augmented(self):
        return SparseMatrix.vstack(self.A, SparseMatrix.identity(self.d))


def slack(P, theta):
    return P.b - matvec(P.A, theta)


def contains_interior(P, theta):
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (P.d,) or not np.all(np.isfinite(theta)):
        return False
    return bool(np.all(slack(P, theta) > 0))


def augmented(P):
    """Â = [A; I_d]."""
    return P.augmented


def build_hypercube(d, half_width=1.0):
    if d < 1 or half_width <= 0:
        raise ValueError("need d >= 1 and half_width > 0")
    rows = np.arange(2 * d)
    cols = np.repeat(np.arange(d), 2)
    vals = np.tile([1.0, -1.0], d)
    A = SparseMatrix.from_coo(2 * d, d, rows, cols, vals)
    return Polytope(A, np.full(2 * d, float(half_width)), half_width * np.sqrt(d), np.zeros(d))


def build_simplex(d):
    """{θ ≥ 0, Σθ ≤ 1}."""
    if d < 1:
        raise ValueError("need d >= 1")
    rows = np.concatenate([np.arange(d), np.full(d, d)])
    cols = np.concatenate([np.arange(d), np.arange(d)])
    vals = np.concatenate([-np.ones(d), np.ones(d)])
    A = SparseMatrix.from_coo(d + 1, d, rows, cols, vals)
    b = np.zeros(d + 1)
    b[d] = 1.0
    return Polytope(A, b, 1.0, np.full(d, 1.0 / (d + 2)))


def build_l1_ball(d, radius=1.0):
    """All 2^d sign constraints ±θ₁ ± … ± θ_d ≤ radius."""
    if d > L1_MAX_DIM:
        raise UnsupportedDimension(f"l1 ball needs 2^{d} constraints; limit is d <= {L1_MAX_DIM}")
    if d < 1 or radius <= 0:
        raise ValueError("need d >= 1 and radius > 0")
    signs = np.array(list(product([1.0, -1.0], repeat=d)))
    A = SparseMatrix.from_dense(signs)
    return Polytope(A, np.full(2**d, float(radius)), float(radius), np.zeros(d))


def build_polygon(k, radius=1.0):
    """Regular k-gon in the plane with inradius ``radius``; m = k."""
    if k < 3 or radius <= 0:
        raise ValueError("need k >= 3 and radius > 0")
    ang = 2.0 * np.pi * np.arange(k) / k
    A = SparseMatrix.from_dense(np.column_stack([np.cos(ang), np.sin(ang)]))
    return Polytope(A, np.full(k, float(radius)), float(radius) / np.cos(np.pi / k), np.zeros(2))


def build_sparse_corpus(d, seed=0, extra_nnz=3):
    """Box [−1,1]^d plus 2d random rows with ``extra_nnz`` entries each; m = 4d.

    Offsets of the random rows are at least 1, so the origin is interior.
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(d)]))
    cube = build_hypercube(d, 1.0)
    k = min(extra_nnz, d)
    rows, cols, vals = [], [], []
    for i in range(2 * d):
        c = np.sort(rng.choice(d, size=k, replace=False))
        rows.extend([i] * k)
        cols.extend(c.tolist())
        vals.extend(rng.standard_normal(k).tolist())
    extra = SparseMatrix.from_coo(2 * d, d, rows, cols, vals)
    A = SparseMatrix.vstack(cube.A, extra)
    b = np.concatenate([cube.b, 1.0 + rng.random(2 * d)])
    return Polytope(A, b, np.sqrt(d), np.zeros(d))


def to_json(P):
    coo = P.A.csr.tocoo()
    order = np.lexsort((coo.col, coo.row))
    entries = [
        [int(coo.row[i]), int(coo.col[i]), float(coo.data[i])] for i in order
    ]
    return {
        "d": P.d,
        "m": P.m,
        "coo": entries,
        "b": [float(x) for x in P.b],
        "R": P.radius,
        "witness": [float(x) for x in P.witness],
    }


def from_json(obj):
    try:
        d, m = int(obj["d"]), int(obj["m"])
        coo = obj["coo"]
        b, R, w = obj["b"], obj["R"], obj["witness"]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed polytope document: {exc}") from exc
    rows = [int(e[0]) for e in coo]
    cols = [int(e[1]) for e in coo]
    vals = [float(e[2]) for e in coo]
    A = SparseMatrix.from_coo(m, d, rows, cols, vals)
    return Polytope(A, np.asarray(b, dtype=float), float(R), np.asarray(w, dtype=float))


def load(path):
    with open(path) as fh:
        return from_json(json.load(fh))


def dump(P, path):
    with open(path, "w") as fh:
        json.dump(to_json(P), fh)
