"""Experiment configuration files.

The layout is a flat ``key = value`` file (a subset of TOML)::

    # Euclidean Cramer check
    command = "estimate"
    manifold = "euclidean:1"
    family = "gaussian"
    x0 = "origin"
    target = [0.8]
    levels = [8, 16, 32, 64]
    replicas = 100000

Values are JSON literals (numbers, quoted strings, lists, true/false) or
bare words, which are read as strings. ``[section]`` headers are ignored.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from typing import List, Optional

import numpy as np

from .errors import ConfigError
from .geometry import MANIFOLD_KINDS, Manifold, parse_manifold
from .measures import FAMILY_KINDS, parse_family
from .rates import MODEL_KINDS

COMMANDS = ("walk", "bm", "rate", "action", "cramer", "estimate", "exitbound", "semigroup", "conjugate")


@dataclass
class ExperimentConfig:
    command: Optional[str] = None
    manifold: str = "euclidean:1"
    family: str = "gaussian"
    model: str = "walk"
    x0: object = "origin"
    target: object = None
    v: object = None
    p: object = None
    levels: List[int] = field(default_factory=lambda: [8, 16, 32, 64])
    replicas: object = 10_000
    delta: Optional[float] = None
    n: int = 16
    T: float = 1.0
    t: float = 0.5
    dt: float = 1e-3
    eps: float = 1.0
    seed: int = 0
    threads: int = 1
    taus: List[float] = field(default_factory=lambda: [0.005, 0.01])
    deltas: List[float] = field(default_factory=lambda: [0.4, 0.5, 0.7])
    terminal: str = "neg_sq_dist"
    segments: int = 16
    max_geodesics: int = 4
    tolerance: float = 0.15
    output: Optional[str] = None

    def validate(self) -> List[str]:
        errs = []
        if self.command is not None and self.command not in COMMANDS:
            errs.append(f"command: unknown {self.command!r}; supported: {', '.join(COMMANDS)}")
        try:
            m = parse_manifold(str(self.manifold))
        except ValueError as exc:
            errs.append(f"manifold: {exc}")
            m = None
        if m is not None:
            try:
                parse_family(str(self.family), m)
            except ValueError as exc:
                errs.append(f"family: {exc}")
        if self.model not in MODEL_KINDS:
            errs.append(f"model: unknown {self.model!r}; supported: {', '.join(MODEL_KINDS)}")
        for key in ("dt", "T", "t", "tolerance"):
            val = getattr(self, key)
            if not isinstance(val, (int, float)) or isinstance(val, bool) or not val > 0:
                errs.append(f"{key}: must be a positive number, got {val!r}")
        if not isinstance(self.eps, (int, float)) or self.eps < 0:
            errs.append(f"eps: must be a nonnegative number, got {self.eps!r}")
        for key in ("n", "segments", "max_geodesics", "threads"):
            val = getattr(self, key)
            if not isinstance(val, int) or isinstance(val, bool) or val < 1:
                errs.append(f"{key}: must be a positive integer, got {val!r}")
        if not isinstance(self.seed, int) or self.seed < 0:
            errs.append(f"seed: must be a nonnegative integer, got {self.seed!r}")
        reps = self.replicas if isinstance(self.replicas, list) else [self.replicas]
        if not reps or any(not isinstance(r, int) or isinstance(r, bool) or r < 1 for r in reps):
            errs.append(f"replicas: must be a positive integer or list of them, got {self.replicas!r}")
        if (not isinstance(self.levels, list) or not self.levels
                or any(not isinstance(n, int) or n < 1 for n in self.levels)
                or sorted(set(self.levels)) != self.levels):
            errs.append(f"levels: must be a strictly increasing list of positive integers, got {self.levels!r}")
        if self.delta is not None and not (isinstance(self.delta, (int, float)) and self.delta > 0):
            errs.append(f"delta: must be positive, got {self.delta!r}")
        for key in ("taus", "deltas"):
            val = getattr(self, key)
            if not isinstance(val, list) or any(not isinstance(q, (int, float)) or q <= 0 for q in val):
                errs.append(f"{key}: must be a list of positive numbers, got {val!r}")
        return errs

    def manifold_model(self) -> Manifold:
        return parse_manifold(str(self.manifold))

    def point(self, m: Manifold, spec, base=None) -> np.ndarray:
        """Resolve ``origin``/``pole``, ``dist:d`` (along the first basis vector) or coordinates."""
        if spec is None:
            raise ConfigError(["a point is required"])
        if isinstance(spec, str):
            s = spec.strip().lower()
            if s in ("origin", "pole"):
                return m.origin()
            if s.startswith("dist:"):
                b = m.origin() if base is None else base
                d = float(s[5:])
                return m.exp(b, d * m.tangent_basis(b)[0])
            spec = [float(c) for c in s.split(",")]
        return m.check(np.atleast_1d(np.asarray(spec, dtype=float)))


_FIELDS = {f.name for f in fields(ExperimentConfig)}


def _parse_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        if raw.startswith(("'", '"')) and raw.endswith(raw[0]):
            return raw[1:-1]
        return raw


_INT_KEYS = ("n", "segments", "max_geodesics", "threads", "seed", "replicas", "levels")


def coerce(values: dict) -> dict:
    """Turn integral floats (``1e5``) into ints for the integer-valued keys."""
    out = dict(values)
    for key in _INT_KEYS:
        val = out.get(key)
        if isinstance(val, float) and val.is_integer():
            out[key] = int(val)
        elif isinstance(val, list):
            out[key] = [int(q) if isinstance(q, float) and q.is_integer() else q for q in val]
    return out


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a config file, reporting every problem at once."""
    errs = []
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = line.split("#", 1)[0].strip()
        if not s or (s.startswith("[") and s.endswith("]") and "=" not in s):
            continue
        key, sep, raw = s.partition("=")
        key = key.strip()
        if not sep or not key:
            errs.append(f"line {lineno}: expected 'key = value', got {line.strip()!r}")
            continue
        if key not in _FIELDS:
            errs.append(f"line {lineno}: unknown key {key!r}")
            continue
        values[key] = _parse_value(raw.strip())
    cfg = ExperimentConfig(**coerce(values))
    errs.extend(cfg.validate())
    if errs:
        raise ConfigError(errs)
    return cfg


__all__ = ["ExperimentConfig", "parse_config", "COMMANDS", "MANIFOLD_KINDS", "FAMILY_KINDS"]
