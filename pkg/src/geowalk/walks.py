"""Rescaled geodesic random walks and the path process Z_n."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import rng as rngmod
from .geometry import Manifold
from .measures import MeasureFamily


@dataclass(frozen=True)
class WalkConfig:
    manifold: Manifold
    family: MeasureFamily
    x0: np.ndarray
    n: int
    horizon: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if int(self.n) < 1:
            raise ValueError("n must be >= 1")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        object.__setattr__(self, "x0", self.manifold.check(self.x0))

    @property
    def num_steps(self) -> int:
        # guard against floor(n*T) landing just below an integer
        return int(math.floor(self.n * self.horizon + 1e-9))


@dataclass
class WalkPath:
    """``steps[i+1] = exp(steps[i], increments[i] / n)``."""

    steps: np.ndarray
    increments: np.ndarray


def run_geodesic_walk(cfg: WalkConfig, draw: Optional[Callable] = None) -> WalkPath:
    """Simulate the walk ``S_{i+1} = Exp_{S_i}(X_{i+1} / n)`` for ``floor(nT)`` steps.

    ``draw(x, rng)`` overrides the increment sampler; by default increments
    come from ``cfg.family`` at the current point.
    """
    m = cfg.manifold
    gen = rngmod.stream(cfg.seed, rngmod.WALK)
    draw = draw or cfg.family.sample
    steps = np.empty((cfg.num_steps + 1, m.ambient_dim))
    incs = np.empty((cfg.num_steps, m.ambient_dim))
    x = cfg.x0
    steps[0] = x
    for i in range(cfg.num_steps):
        v = np.asarray(draw(x, gen), dtype=float)
        incs[i] = v
        x = m.exp(x, v / cfg.n)
        steps[i + 1] = x
    return WalkPath(steps, incs)


def path_at(w: WalkPath, cfg: WalkConfig, t: float) -> np.ndarray:
    """Cadlag evaluation ``Z_n(t) = steps[floor(n t)]``."""
    if not 0.0 <= t <= cfg.horizon:
        raise ValueError(f"t={t} outside [0, {cfg.horizon}]")
    i = min(int(math.floor(cfg.n * t + 1e-9)), len(w.steps) - 1)
    return w.steps[i]


def path_at_geodesic(w: WalkPath, cfg: WalkConfig, t: float) -> np.ndarray:
    """Geodesic interpolation between walk steps; for plotting only."""
    if not 0.0 <= t <= cfg.horizon:
        raise ValueError(f"t={t} outside [0, {cfg.horizon}]")
    i = min(int(math.floor(cfg.n * t)), len(w.increments) - 1)
    frac = cfg.n * t - i
    return cfg.manifold.exp(w.steps[i], frac * w.increments[i] / cfg.n)


def walk_endpoints(manifold: Manifold, family: MeasureFamily, x0, n: int, replicas: int,
                   gen: np.random.Generator, horizon: float = 1.0) -> np.ndarray:
    """Endpoints ``Z_n(T)`` of ``replicas`` independent walks, simulated in lockstep."""
    steps = int(math.floor(n * horizon + 1e-9))
    x = np.broadcast_to(np.asarray(x0, dtype=float), (replicas, manifold.ambient_dim)).copy()
    for _ in range(steps):
        x = manifold.exp(x, family.sample(x, gen) / n)
    return x


def write_walk_csv(w: WalkPath, cfg: WalkConfig, path) -> None:
    """Columns ``t, coord_0, ..., coord_d`` with one row per step."""
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["t"] + [f"coord_{i}" for i in range(w.steps.shape[1])])
        for i, s in enumerate(w.steps):
            out.writerow([repr(i / cfg.n)] + [repr(float(c)) for c in s])
