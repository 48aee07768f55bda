"""Per-step cost of every solver backend × acceptance mode on the sparse corpus."""

import csv
import ctypes
import ctypes.util
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from dikinwalk.polytope import build_sparse_corpus
from dikinwalk.solver import Backend
from dikinwalk.walk import Mode, TargetFunction, hyperparams, run

DEFAULT_DIMS = (50, 100, 200, 400)
CELLS = (
    (Backend.EXACT, Mode.EXACT),
    (Backend.EXACT, Mode.ESTIMATED),
    (Backend.WOODBURY, Mode.EXACT),
    (Backend.WOODBURY, Mode.ESTIMATED),
)
COLUMNS = (
    "d", "m", "nnz", "backend", "mode", "steps", "n_samples", "accepted",
    "refactorizations", "lowrank_updates", "solves",
    "time_per_step_mean", "time_per_step_median",
)
TIMING_COLUMNS = ("time_per_step_mean", "time_per_step_median")


def tune_allocator():
    """Keep freed large blocks in the heap so repeated d×𝒩 temporaries skip page faults.

    Only affects glibc; a no-op elsewhere.
    """
    name = ctypes.util.find_library("c")
    if name is None:
        return False
    try:
        libc = ctypes.CDLL(name)
        # M_MMAP_THRESHOLD = -3, M_TRIM_THRESHOLD = -1
        return bool(libc.mallopt(-3, 1 << 30)) and bool(libc.mallopt(-1, 1 << 31))
    except (OSError, AttributeError):
        return False


def worker_count():
    raw = os.environ.get("DIKIN_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def run_cell(d, backend, mode, steps, seed=0, profile="practical", corpus_seed=0):
    tune_allocator()
    P = build_sparse_corpus(d, seed=corpus_seed)
    target = TargetFunction.uniform()
    cfg = hyperparams(P.m, P.d, P.radius, target, profile=profile, steps=steps,
                      mode=Mode(mode), backend=Backend(backend), seed=seed)
    rep = run(cfg, P, target, record=False, timing=True).report()
    return {
        "d": d,
        "m": P.m,
        "nnz": P.A.nnz,
        "backend": Backend(backend).value,
        "mode": Mode(mode).value,
        "steps": steps,
        "n_samples": cfg.n_samples,
        "accepted": round(rep["acceptance_rate"] * rep["steps"]),
        "refactorizations": rep["refactorizations"],
        "lowrank_updates": rep["lowrank_updates"],
        "solves": rep["solves"],
        "time_per_step_mean": rep["wall_time_per_step_mean"],
        "time_per_step_median": rep["wall_time_per_step_median"],
    }


def _cell_args(dims, steps, seed, profile):
    return [(d, b.value, m.value, steps, seed, profile) for d in dims for b, m in CELLS]


def _call(args):
    return run_cell(*args)


def bench(dims=DEFAULT_DIMS, steps=30, seed=0, profile="practical", workers=None):
    """One row per (d, backend, mode) cell, ordered as the loops list them."""
    args = _cell_args(dims, steps, seed, profile)
    workers = worker_count() if workers is None else workers
    if workers > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_call, args))
    return [_call(a) for a in args]


def to_csv(rows, include_timing=True):
    cols = [c for c in COLUMNS if include_timing or c not in TIMING_COLUMNS]
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({c: repr(r[c]) if isinstance(r[c], float) else r[c] for c in cols})
    return buf.getvalue()


def fit_exponent(ds, times):
    """Least-squares slope of log(time) against log(d)."""
    ds, times = np.asarray(ds, dtype=float), np.asarray(times, dtype=float)
    if ds.size < 2:
        return math.nan
    return float(np.polyfit(np.log(ds), np.log(times), 1)[0])


def summarize(rows, column="time_per_step_median"):
    """Fitted exponent per cell and the dense-exact / woodbury-estimated ratio at the largest d."""
    out = {"exponents": {}, "speedup_at_max_d": None, "max_d": None}
    if not rows:
        return out
    for b, m in CELLS:
        sel = sorted((r["d"], r[column]) for r in rows if r["backend"] == b.value and r["mode"] == m.value)
        out["exponents"][f"{b.value}+{m.value}"] = fit_exponent(*zip(*sel)) if sel else math.nan
    dmax = max(r["d"] for r in rows)
    cell = {(r["backend"], r["mode"]): r[column] for r in rows if r["d"] == dmax}
    ref, fast = cell.get(("dense", "exact")), cell.get(("woodbury", "estimated"))
    out["max_d"] = dmax
    if ref is not None and fast:
        out["speedup_at_max_d"] = ref / fast
    return out
