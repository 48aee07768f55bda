"""Run manifests: parsing, validation and resolution into walk inputs."""

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from dikinwalk import polytope as poly
from dikinwalk.errors import ConfigError
from dikinwalk.solver import Backend
from dikinwalk.walk import PROFILES, Mode, TargetFunction, hyperparams, with_overrides

BUILDERS = {
    "hypercube": (poly.build_hypercube, (int, float)),
    "simplex": (poly.build_simplex, (int,)),
    "l1ball": (poly.build_l1_ball, (int, float)),
    "polygon": (poly.build_polygon, (int, float)),
    "sparse": (poly.build_sparse_corpus, (int, int, int)),
}

# overridable WalkConfig fields and their parsers
CONFIG_FIELDS = {
    "alpha": float,
    "eta": float,
    "gamma": float,
    "steps": int,
    "n_samples": int,
    "mode": Mode,
    "backend": Backend,
    "k_max": int,
    "eps_lowrank": float,
    "thin": int,
    "mutate_factor": bool,
}
SCHEDULE_FIELDS = {"w": float, "delta": float}
TOP_FIELDS = {"polytope", "target", "profile", "seed", "config", "out"}


@dataclass(frozen=True)
class RunManifest:
    polytope: str
    target: str = "uniform"
    profile: str = "practical"
    seed: int = 0
    config: dict = field(default_factory=dict)
    out: str = None

    def to_dict(self):
        return {
            "polytope": self.polytope,
            "target": self.target,
            "profile": self.profile,
            "seed": self.seed,
            "config": dict(self.config),
            "out": self.out,
        }


def _number_list(text, path):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(path, f"expected comma-separated numbers, got {text!r}") from None


def parse_polytope(spec):
    """``name:arg,arg`` for a builder, otherwise a JSON file path."""
    if not isinstance(spec, str) or not spec:
        raise ConfigError("polytope", "expected a builder spec or a file path")
    name, _, args = spec.partition(":")
    if name in BUILDERS:
        fn, types = BUILDERS[name]
        raw = [a for a in args.split(",") if a.strip()] if args else []
        if not raw or len(raw) > len(types):
            raise ConfigError("polytope", f"{name} takes 1 to {len(types)} arguments")
        try:
            vals = [t(float(a)) if t is int else t(a) for t, a in zip(types, raw)]
        except ValueError:
            raise ConfigError("polytope", f"bad arguments {args!r}") from None
        if any(t is int and v != float(a) for t, v, a in zip(types, vals, raw)):
            raise ConfigError("polytope", f"{name} needs integer arguments")
        try:
            return fn(*vals), name
        except ValueError as exc:
            raise ConfigError("polytope", str(exc)) from None
    if not os.path.isfile(spec):
        raise ConfigError("polytope", f"unknown builder or missing file {spec!r}")
    try:
        return poly.load(spec), None
    except (OSError, ValueError) as exc:
        raise ConfigError("polytope", f"cannot load {spec!r}: {exc}") from None


def parse_target(spec, d):
    """``uniform``, ``linear:c1,...``, ``quadratic:beta[:x1,...]`` or ``logistic:<json file>``."""
    if not isinstance(spec, str):
        raise ConfigError("target", "expected a target spec string")
    kind, _, rest = spec.partition(":")
    if kind == "uniform":
        return TargetFunction.uniform()
    if kind == "linear":
        c = _number_list(rest, "target")
        if len(c) != d or not all(map(math.isfinite, c)):
            raise ConfigError("target", f"linear target needs {d} finite coefficients")
        return TargetFunction.linear(c)
    if kind == "quadratic":
        beta_s, _, center_s = rest.partition(":")
        beta = _number_list(beta_s, "target")
        if len(beta) != 1 or not beta[0] > 0 or not math.isfinite(beta[0]):
            raise ConfigError("target", "quadratic target needs a positive beta")
        center = _number_list(center_s, "target") if center_s else [0.0] * d
        if len(center) != d:
            raise ConfigError("target", f"quadratic center needs {d} entries")
        return TargetFunction.quadratic(beta[0], center)
    if kind == "logistic":
        try:
            with open(rest) as fh:
                doc = json.load(fh)
            X, y = np.asarray(doc["X"], dtype=float), np.asarray(doc["y"], dtype=float)
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise ConfigError("target", f"cannot read logistic data {rest!r}: {exc}") from None
        if X.ndim != 2 or X.shape[1] != d or y.shape != (X.shape[0],) or not np.all(np.abs(y) == 1):
            raise ConfigError("target", f"logistic data needs X of shape (n, {d}) and labels ±1")
        return TargetFunction.logistic(X, y)
    raise ConfigError("target", f"unknown target kind {kind!r}")


def _parse_config(cfg):
    if not isinstance(cfg, dict):
        raise ConfigError("config", "expected an object")
    out = {}
    for key, val in cfg.items():
        path = f"config.{key}"
        parser = CONFIG_FIELDS.get(key) or SCHEDULE_FIELDS.get(key)
        if parser is None:
            raise ConfigError(path, "unknown field")
        if parser is bool:
            if not isinstance(val, bool):
                raise ConfigError(path, "expected true or false")
            out[key] = val
            continue
        if parser in (int, float):
            if isinstance(val, bool) or not isinstance(val, (int, float)):
                raise ConfigError(path, "expected a number")
            if parser is int and float(val) != int(val):
                raise ConfigError(path, "expected an integer")
            val = parser(val)
            if not math.isfinite(val):
                raise ConfigError(path, "must be finite")
        else:
            try:
                val = parser(val)
            except ValueError:
                raise ConfigError(path, f"invalid value {val!r}") from None
        out[key] = val
    for key in ("alpha", "eta", "w", "delta", "eps_lowrank"):
        if key in out and not out[key] > 0:
            raise ConfigError(f"config.{key}", "must be positive")
    if "gamma" in out and not 0 < out["gamma"] < 1:
        raise ConfigError("config.gamma", "must lie in (0, 1)")
    if "delta" in out and not out["delta"] < 1:
        raise ConfigError("config.delta", "must lie in (0, 1)")
    for key in ("steps", "k_max"):
        if key in out and out[key] < 0:
            raise ConfigError(f"config.{key}", "must be non-negative")
    for key in ("n_samples", "thin"):
        if key in out and out[key] < 1:
            raise ConfigError(f"config.{key}", "must be at least 1")
    return out


def parse_manifest(doc):
    """Validate a manifest mapping; errors carry the offending field path."""
    if not isinstance(doc, dict):
        raise ConfigError("manifest", "expected a JSON object")
    for key in doc:
        if key not in TOP_FIELDS:
            raise ConfigError(key, "unknown field")
    if "polytope" not in doc:
        raise ConfigError("polytope", "required")
    profile = doc.get("profile", "practical")
    if profile not in PROFILES:
        raise ConfigError("profile", f"expected one of {sorted(PROFILES)}")
    seed = doc.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ConfigError("seed", "expected an unsigned 64-bit integer")
    out = doc.get("out")
    if out is not None and not isinstance(out, str):
        raise ConfigError("out", "expected a directory path")
    target = doc.get("target", "uniform")
    spec = doc["polytope"]
    if not isinstance(spec, str):
        raise ConfigError("polytope", "expected a builder spec or a file path")
    if spec.partition(":")[0] not in BUILDERS and not os.path.isfile(spec):
        raise ConfigError("polytope", f"unknown builder or missing file {spec!r}")
    if not isinstance(target, str):
        raise ConfigError("target", "expected a target spec string")
    return RunManifest(doc["polytope"], target, profile, seed, _parse_config(doc.get("config", {})), out)


def load_manifest(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError("manifest", f"cannot read {path!r}: {exc.strerror}") from None
    except ValueError as exc:
        raise ConfigError("manifest", f"invalid JSON in {path!r}: {exc}") from None
    return parse_manifest(doc)


@dataclass(frozen=True)
class Resolved:
    polytope: object
    target: object
    config: object
    builder: str = None


def resolve(manifest):
    """(Polytope, TargetFunction, WalkConfig) described by ``manifest``."""
    P, builder = parse_polytope(manifest.polytope)
    target = parse_target(manifest.target, P.d)
    cfg = dict(manifest.config)
    sched = {k: cfg.pop(k) for k in list(cfg) if k in SCHEDULE_FIELDS}
    step_size = {k: cfg.pop(k) for k in ("alpha", "eta") if k in cfg}
    config = hyperparams(P.m, P.d, P.radius, target, profile=manifest.profile, seed=manifest.seed, **sched, **cfg)
    if step_size:
        config = with_overrides(config, **step_size)
    return Resolved(P, target, config, builder)
