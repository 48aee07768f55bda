"""Command-line entry point: sample | validate | estimator-check | bench."""

import argparse
import json
import os
import sys

import numpy as np

from dikinwalk.errors import ConfigError, DikinError
from dikinwalk.harness import bench as bench_mod
from dikinwalk.harness.estimator_check import estimator_check
from dikinwalk.harness.manifest import load_manifest, parse_manifest, parse_polytope, resolve
from dikinwalk.harness.validation import validate
from dikinwalk.walk import run

EXIT_OK, EXIT_FAIL, EXIT_ERROR = 0, 1, 2
TIMING_KEYS = ("wall_time_per_step_mean", "wall_time_per_step_median")


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def samples_jsonl(samples):
    return "".join(json.dumps([float(x) for x in row]) + "\n" for row in samples)


def _write(path, text):
    try:
        with open(path, "w", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise ConfigError("out", f"cannot write {path!r}: {exc.strerror}") from None


def _out_dir(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise ConfigError("out", f"cannot create {path!r}: {exc.strerror}") from None
    return path


def manifest_from_args(args):
    """Manifest file (if any) with command-line flags layered on top."""
    doc = load_manifest(args.manifest).to_dict() if args.manifest else {}
    doc = {k: v for k, v in doc.items() if v is not None}
    doc.setdefault("config", {})
    for key in ("polytope", "target", "profile", "seed", "out"):
        val = getattr(args, key, None)
        if val is not None:
            doc[key] = val
    for key in ("steps", "mode", "backend"):
        val = getattr(args, key, None)
        if val is not None:
            doc["config"][key] = val
    return parse_manifest(doc)


def sample_metrics(result, resolved):
    rep = result.report()
    timing = {k: rep.pop(k) for k in TIMING_KEYS}
    cfg = result.config
    rep.update(
        d=resolved.polytope.d,
        m=resolved.polytope.m,
        alpha=cfg.alpha,
        eta=cfg.eta,
        gamma=cfg.gamma,
        n_samples=cfg.n_samples,
        mode=cfg.mode.value,
        backend=cfg.backend.value,
        seed=cfg.seed,
        profile=cfg.profile,
    )
    return rep, timing


def cmd_sample(manifest, with_validation=False):
    """Run the chain and write samples.jsonl, metrics.json and timing.json."""
    res = resolve(manifest)
    out = _out_dir(manifest.out or "out")
    result = run(res.config, res.polytope, res.target, timing=True)
    metrics, timing = sample_metrics(result, res)
    if with_validation:
        metrics["validation"] = validate(result.samples, res.polytope, res.target, res.builder)
    _write(os.path.join(out, "samples.jsonl"), samples_jsonl(result.samples))
    _write(os.path.join(out, "metrics.json"), canonical_json(metrics))
    _write(os.path.join(out, "timing.json"), canonical_json(timing))
    return metrics


def _sample(args):
    metrics = cmd_sample(manifest_from_args(args))
    sys.stdout.write(canonical_json(metrics))
    return EXIT_OK


def _validate(args):
    manifest = manifest_from_args(args)
    metrics = cmd_sample(manifest, with_validation=True)
    sys.stdout.write(canonical_json(metrics["validation"]))
    return EXIT_OK if metrics["validation"]["passed"] else EXIT_FAIL


def _estimator_check(args):
    P, _ = parse_polytope(args.polytope)
    if not 0 < args.gamma < 1:
        raise ConfigError("gamma", "must lie in (0, 1)")
    if args.draws < 2 or args.runs < 2:
        raise ConfigError("draws" if args.draws < 2 else "runs", "must be at least 2")
    report = estimator_check(P, args.seed or 0, args.draws, args.gamma, args.runs, args.zero_delta)
    text = canonical_json(report)
    if args.out:
        _write(os.path.join(_out_dir(args.out), "estimator.json"), text)
    sys.stdout.write(text)
    return EXIT_OK if report["passed"] else EXIT_FAIL


def parse_dims(text):
    try:
        dims = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError("dims", f"expected comma-separated integers, got {text!r}") from None
    if any(d < 1 for d in dims):
        raise ConfigError("dims", "dimensions must be positive")
    return dims


def _bench(args):
    dims = parse_dims(args.dims)
    if args.steps is not None and args.steps < 1:
        raise ConfigError("steps", "must be at least 1")
    rows = bench_mod.bench(dims, args.steps or 30, args.seed or 0, args.profile or "practical")
    text = bench_mod.to_csv(rows)
    if args.out:
        _write(os.path.join(_out_dir(args.out), "bench.csv"), text)
    sys.stdout.write(text)
    summary = bench_mod.summarize(rows)
    sys.stderr.write(json.dumps(summary, sort_keys=True) + "\n")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="dikinwalk", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, walk=True):
        sp.add_argument("--polytope", help="builder spec such as hypercube:2,1 or a polytope JSON file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help="output directory")
        if walk:
            sp.add_argument("--manifest", help="run manifest JSON file")
            sp.add_argument("--target", help="uniform | linear:c1,.. | quadratic:beta[:x1,..] | logistic:<file>")
            sp.add_argument("--profile", choices=["paper", "practical"])
            sp.add_argument("--steps", type=int)
            sp.add_argument("--mode", choices=["exact", "estimated"])
            sp.add_argument("--backend", choices=["dense", "woodbury"])

    common(sub.add_parser("sample", help="run the walk and write samples and metrics"))
    common(sub.add_parser("validate", help="sample, then compare against the exact law"))
    ec = sub.add_parser("estimator-check", help="bias, tails and factor accuracy of the estimator")
    common(ec, walk=False)
    ec.add_argument("--draws", type=int, default=100_000)
    ec.add_argument("--runs", type=int, default=2000)
    ec.add_argument("--gamma", type=float, default=1e-3)
    ec.add_argument("--zero-delta", action="store_true", help="use z = θ so that Δ = 0")
    b = sub.add_parser("bench", help="per-step time of every backend × mode on the sparse corpus")
    b.add_argument("--dims", default=",".join(map(str, bench_mod.DEFAULT_DIMS)))
    b.add_argument("--steps", type=int)
    b.add_argument("--seed", type=int)
    b.add_argument("--profile", choices=["paper", "practical"])
    b.add_argument("--out", help="output directory")
    return p


HANDLERS = {"sample": _sample, "validate": _validate, "estimator-check": _estimator_check, "bench": _bench}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "estimator-check" and not args.polytope:
            raise ConfigError("polytope", "required")
        return HANDLERS[args.command](args)
    except ConfigError as exc:
        err = {"error": type(exc).__name__, "field": exc.field, "message": str(exc)}
    except (DikinError, ValueError) as exc:
        err = {"error": type(exc).__name__, "field": None, "message": str(exc)}
    sys.stderr.write(json.dumps(err, sort_keys=True) + "\n")
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
