"""Statistical checks of sample sets against exactly computable laws.

Supported: any target on a 1-d interval (moments by adaptive quadrature), any
target on a 2-d polygon (moments and 20×20 grid masses by polygon clipping and
triangle quadrature) and the uniform law on a hypercube or simplex in any
dimension (closed-form moments).
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from dikinwalk.errors import UnsupportedValidation

GRID = 20
MEAN_TOL = 0.05
SECOND_TOL = 0.05
TV_TOL = 0.1
_GL_ORDER = 12


@dataclass(frozen=True)
class Reference:
    mean: np.ndarray
    second: np.ndarray
    # 2-d only: bounding box (lo, hi) of the grid and exact cell masses
    box: tuple = None
    cells: np.ndarray = None


def _vectorized(target):
    spec = target.spec or {}
    kind = spec.get("kind")
    if kind == "uniform":
        return lambda X: np.zeros(len(X))
    if kind == "linear":
        c = np.asarray(spec["c"])
        return lambda X: X @ c
    if kind == "quadratic":
        center, beta = np.asarray(spec["center"]), spec["beta"]
        return lambda X: 0.5 * beta * np.sum((X - center) ** 2, axis=1)
    return lambda X: np.array([target(x) for x in X])


def clip_polygon(poly, a, b):
    """Part of the convex polygon ``poly`` (vertex list) with a·x ≤ b."""
    out = []
    n = len(poly)
    for i in range(n):
        p, q = poly[i], poly[(i + 1) % n]
        fp, fq = a @ p - b, a @ q - b
        if fp <= 0:
            out.append(p)
        if fp * fq < 0:
            out.append(p + (q - p) * (fp / (fp - fq)))
    return out


def polygon(P):
    """Vertices of a 2-d polytope in counter-clockwise order."""
    r = P.radius * 1.01 + 1.0
    poly = [np.array(v, dtype=float) for v in ((-r, -r), (r, -r), (r, r), (-r, r))]
    A = P.A.to_dense()
    for a, b in zip(A, P.b):
        poly = clip_polygon(poly, a, b)
    return poly


def _triangle_rule():
    x, w = np.polynomial.legendre.leggauss(_GL_ORDER)
    x, w = (x + 1) / 2, w / 2
    u, v = np.meshgrid(x, x, indexing="ij")
    wu, wv = np.meshgrid(w, w, indexing="ij")
    # Duffy map of the unit square onto the reference triangle
    s, t = u.ravel(), (v * (1 - u)).ravel()
    return s, t, (wu * wv * (1 - u)).ravel()


def _polygon_integrals(poly, f, f0):
    """∫ e^{f0−f}·(1, x, y, x², y²) over a convex polygon."""
    if len(poly) < 3:
        return np.zeros(5)
    s, t, w = _triangle_rule()
    o = poly[0]
    pts, wts = [], []
    for p, q in zip(poly[1:-1], poly[2:]):
        e1, e2 = p - o, q - o
        area2 = abs(e1[0] * e2[1] - e1[1] * e2[0])
        pts.append(o + s[:, None] * e1 + t[:, None] * e2)
        wts.append(w * area2)
    X, W = np.vstack(pts), np.concatenate(wts)
    W = W * np.exp(f0 - f(X))
    return np.array([W.sum(), W @ X[:, 0], W @ X[:, 1], W @ X[:, 0] ** 2, W @ X[:, 1] ** 2])


def reference_2d(P, target):
    f = _vectorized(target)
    poly = polygon(P)
    V = np.array(poly)
    lo, hi = V.min(axis=0), V.max(axis=0)
    f0 = float(np.min(f(V)))
    ex, ey = np.linspace(lo[0], hi[0], GRID + 1), np.linspace(lo[1], hi[1], GRID + 1)
    cells = np.zeros((GRID, GRID))
    tot = np.zeros(5)
    for i in range(GRID):
        strip = clip_polygon(clip_polygon(poly, np.array([-1.0, 0.0]), -ex[i]), np.array([1.0, 0.0]), ex[i + 1])
        for j in range(GRID):
            cell = clip_polygon(clip_polygon(strip, np.array([0.0, -1.0]), -ey[j]), np.array([0.0, 1.0]), ey[j + 1])
            I = _polygon_integrals(cell, f, f0)
            cells[i, j] = I[0]
            tot += I
    Z = tot[0]
    return Reference(tot[1:3] / Z, tot[3:5] / Z, (lo, hi), cells / Z)


def reference_1d(P, target):
    a, b = P.A.to_dense()[:, 0], P.b
    lo = max((bi / ai for ai, bi in zip(a, b) if ai < 0), default=-math.inf)
    hi = min((bi / ai for ai, bi in zip(a, b) if ai > 0), default=math.inf)
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise UnsupportedValidation("unbounded interval")
    xs = np.linspace(lo, hi, 201)
    f0 = min(target(np.array([x])) for x in xs)
    dens = lambda x, k: x**k * math.exp(f0 - target(np.array([x])))
    m = [integrate.quad(dens, lo, hi, args=(k,), epsabs=0, epsrel=1e-12, limit=200)[0] for k in range(3)]
    return Reference(np.array([m[1] / m[0]]), np.array([m[2] / m[0]]))


def reference_closed_form(P, target, builder):
    if (target.spec or {}).get("kind") != "uniform":
        raise UnsupportedValidation("closed-form moments need the uniform target")
    d = P.d
    if builder == "hypercube":
        hw = float(P.b[0])
        return Reference(np.zeros(d), np.full(d, hw * hw / 3.0))
    if builder == "simplex":
        return Reference(np.full(d, 1.0 / (d + 1)), np.full(d, 2.0 / ((d + 1) * (d + 2))))
    raise UnsupportedValidation(f"no reference law for builder {builder!r} in dimension {d}")


def reference(P, target, builder=None):
    if P.d == 1:
        return reference_1d(P, target)
    if P.d == 2:
        return reference_2d(P, target)
    return reference_closed_form(P, target, builder)


def grid_tv(samples, box, cells):
    """½Σ|empirical − exact| over the 20×20 grid on ``box``."""
    lo, hi = box
    H, _, _ = np.histogram2d(samples[:, 0], samples[:, 1], bins=GRID, range=[[lo[0], hi[0]], [lo[1], hi[1]]])
    return 0.5 * float(np.abs(H / max(len(samples), 1) - cells).sum())


def empirical_tv(a, b, box):
    """Grid TV between two 2-d sample sets on a shared 20×20 grid."""
    lo, hi = box
    rng = [[lo[0], hi[0]], [lo[1], hi[1]]]
    Ha, _, _ = np.histogram2d(a[:, 0], a[:, 1], bins=GRID, range=rng)
    Hb, _, _ = np.histogram2d(b[:, 0], b[:, 1], bins=GRID, range=rng)
    return 0.5 * float(np.abs(Ha / len(a) - Hb / len(b)).sum())


def validate(samples, P, target, builder=None, ref=None):
    """Moment errors and (2-d) grid TV against the exact law, with pass flags."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[1] != P.d or len(samples) == 0:
        raise ValueError("samples must be a non-empty n×d array")
    ref = reference(P, target, builder) if ref is None else ref
    mean_err = float(np.max(np.abs(samples.mean(axis=0) - ref.mean)))
    second_err = float(np.max(np.abs((samples**2).mean(axis=0) - ref.second)))
    out = {
        "mean_error": mean_err,
        "second_moment_error": second_err,
        "mean_pass": bool(mean_err <= MEAN_TOL),
        "second_moment_pass": bool(second_err <= SECOND_TOL),
    }
    if ref.cells is not None:
        tv = grid_tv(samples, ref.box, ref.cells)
        out["grid_tv"] = tv
        out["grid_tv_pass"] = bool(tv <= TV_TOL)
    out["passed"] = all(v for k, v in out.items() if k.endswith("_pass"))
    return out
