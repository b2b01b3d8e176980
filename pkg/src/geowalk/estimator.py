"""Monte Carlo estimation of large-deviation rates and bound checks.

Replicas are split into fixed-size blocks, each with its own counter-based
stream keyed by ``(seed, namespace, level, block)``. Blocks can run on any
number of threads; results are reduced in block order, so estimates are
bit-identical regardless of the worker count.
"""
from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy import stats

from . import rng as rngmod
from .brownian import brownian_batch, coupled_batch, exit_bound
from .errors import AllZeroCountsError, DomainError, SchemaVersionError
from .geometry import Manifold, Sphere
from .measures import MeasureFamily
from .rates import RateModel, cramer_rate
from .walks import walk_endpoints

SCHEMA_VERSION = 1
BLOCK_SIZE = 1 << 15
DEFAULT_LEVELS = (8, 16, 32, 64)


def _map_blocks(fn, tasks, threads):
    if threads <= 1:
        return [fn(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, tasks))


def wilson_interval(hits: int, n: int, z: float = 1.0):
    p = hits / n
    denom = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z / denom * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
    lo = 0.0 if hits == 0 else max(0.0, centre - half)
    hi = 1.0 if hits == n else min(1.0, centre + half)
    return lo, hi


def default_delta(distance: float) -> float:
    return max(0.05 * distance, 0.02)


@dataclass
class RateEstimate:
    """Endpoint hit statistics across scale levels and the fitted rate.

    ``log_probs[i]`` is ``-(1/n) log p_n`` (None for dropped zero-hit levels).
    The rate is the weighted least-squares slope of
    ``-log p_n + prefactor_power * log n`` against ``n``.
    """

    levels: List[int]
    hits: List[int]
    replicas: List[int]
    log_probs: List[Optional[float]]
    fitted_rate: float
    stderr: float
    target: List[float]
    delta: float
    dropped: List[int] = field(default_factory=list)
    prefactor_power: float = 0.0

    def table_rows(self):
        for n, h, r, lp in zip(self.levels, self.hits, self.replicas, self.log_probs):
            yield n, h, r, lp


def fit_rate(levels, hits, replicas, prefactor_power: float = 0.0):
    """Weighted slope fit; returns ``(rate, stderr, dropped_levels)``."""
    levels = np.asarray(levels, dtype=float)
    hits = np.asarray(hits)
    replicas = np.asarray(replicas)
    keep = hits > 0
    dropped = [int(n) for n in levels[~keep]]
    if keep.sum() < 2:
        raise AllZeroCountsError(
            f"need at least two levels with hits, got {int(keep.sum())} (hits={hits.tolist()})"
        )
    n = levels[keep]
    y = -np.log(hits[keep] / replicas[keep]) + prefactor_power * np.log(n)
    sd = []
    for h, r in zip(hits[keep], replicas[keep]):
        lo, hi = wilson_interval(int(h), int(r))
        sd.append(0.5 * (math.log(hi) - math.log(lo)))
    w = 1.0 / np.square(sd)
    nbar = np.sum(w * n) / np.sum(w)
    ybar = np.sum(w * y) / np.sum(w)
    sxx = np.sum(w * (n - nbar) ** 2)
    slope = np.sum(w * (n - nbar) * (y - ybar)) / sxx
    return float(slope), float(1.0 / math.sqrt(sxx)), dropped


def estimate_endpoint_rate(manifold: Manifold, family: MeasureFamily, x0, target, delta=None,
                           levels: Sequence[int] = DEFAULT_LEVELS, replicas=100_000, seed: int = 0,
                           threads: int = 1, prefactor: bool = True,
                           block_size: int = BLOCK_SIZE) -> RateEstimate:
    """Estimate the endpoint rate at ``target`` from hit frequencies of a geodesic ball.

    ``replicas`` is an integer or one count per level. With ``prefactor`` the
    local-limit factor ``n^(k/2)`` of the ball probability is divided out
    before the slope fit.
    """
    m = manifold
    x0, target = m.check(x0), m.check(target)
    levels = [int(n) for n in levels]
    if sorted(set(levels)) != levels:
        raise ValueError("levels must be strictly increasing")
    if np.ndim(replicas) == 0:
        reps = [int(replicas)] * len(levels)
    else:
        reps = [int(r) for r in replicas]
        if len(reps) != len(levels):
            raise ValueError("need one replica count per level")
    if delta is None:
        delta = default_delta(float(m.dist(x0, target)))
    if not delta > 0:
        raise ValueError("delta must be positive")

    hits = []
    for n, total in zip(levels, reps):
        def count(task, n=n):
            b, start, stop = task
            gen = rngmod.stream(seed, rngmod.WALK, n, b)
            ends = walk_endpoints(m, family, x0, n, stop - start, gen)
            return int(np.sum(m.dist(ends, target) < delta))

        hits.append(sum(_map_blocks(count, list(rngmod.blocks(total, block_size)), threads)))

    power = 0.5 * m.dim if prefactor else 0.0
    rate, se, dropped = fit_rate(levels, hits, reps, power)
    log_probs = [(-math.log(h / r) / n) if h > 0 else None for n, h, r in zip(levels, hits, reps)]
    return RateEstimate(levels, hits, reps, log_probs, rate, se, target.tolist(), float(delta),
                        dropped, power)


# ---------------------------------------------------------------------------
# heat semigroup
# ---------------------------------------------------------------------------


@dataclass
class HeatRecord:
    t: float
    empirical: float
    theory: float
    stderr: float
    z_score: float


def estimate_heat_semigroup(m: Manifold, x0, t: float, replicas: int = 10_000, dt: float = 1e-3,
                            seed: int = 0, threads: int = 1, block_size: int = BLOCK_SIZE) -> HeatRecord:
    """Compare the mean of the last embedding coordinate with its heat-semigroup decay.

    On the sphere of radius ``r`` in R^(k+1) the coordinate functions are
    eigenfunctions of the Laplacian with eigenvalue ``-k / r^2``, so under the
    generator ``Delta / 2`` the mean decays like ``exp(-k t / (2 r^2))``.
    """
    if not isinstance(m, Sphere):
        raise ValueError("the spectral oracle is only available on the sphere")
    x0 = m.check(x0)
    theory = math.exp(-m.dim * t / (2 * m.radius**2)) * float(x0[-1])
    if t == 0:
        return HeatRecord(0.0, float(x0[-1]), float(x0[-1]), 0.0, 0.0)

    def run(task):
        b, start, stop = task
        gen = rngmod.stream(seed, rngmod.SEMIGROUP, b)
        x, _ = brownian_batch(m, x0, 1.0, t, dt, stop - start, gen)
        z = x[:, -1]
        return float(np.sum(z)), float(np.sum(z * z))

    parts = _map_blocks(run, list(rngmod.blocks(replicas, block_size)), threads)
    s1 = sum(p[0] for p in parts)
    s2 = sum(p[1] for p in parts)
    mean = s1 / replicas
    var = max(s2 / replicas - mean * mean, 0.0) * replicas / (replicas - 1)
    se = math.sqrt(var / replicas)
    return HeatRecord(float(t), mean, theory, se, (mean - theory) / se if se > 0 else 0.0)


def heat_dt_sensitivity(m: Manifold, x0, t: float, replicas: int = 10_000, dt: float = 1e-3,
                        seed: int = 0, threads: int = 1, block_size: int = BLOCK_SIZE):
    """Heat records at ``dt`` and ``dt/2`` from coupled paths, plus the mean shift.

    Returns ``(coarse, fine, shift)`` with ``shift = fine.empirical - coarse.empirical``.
    """
    if not isinstance(m, Sphere):
        raise ValueError("the spectral oracle is only available on the sphere")
    x0 = m.check(x0)
    theory = math.exp(-m.dim * t / (2 * m.radius**2)) * float(x0[-1])

    def run(task):
        b, start, stop = task
        gen = rngmod.stream(seed, rngmod.SEMIGROUP, 1, b)
        xc, xf = coupled_batch(m, x0, 1.0, t, dt, stop - start, gen)
        return xc[:, -1], xf[:, -1]

    parts = _map_blocks(run, list(rngmod.blocks(replicas, block_size)), threads)
    out = []
    for z in (np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])):
        mean = float(z.mean())
        se = float(z.std(ddof=1) / math.sqrt(replicas))
        out.append(HeatRecord(float(t), mean, theory, se, (mean - theory) / se))
    return out[0], out[1], out[1].empirical - out[0].empirical


# ---------------------------------------------------------------------------
# exit bound
# ---------------------------------------------------------------------------


@dataclass
class ExitPoint:
    tau: float
    delta: float
    hits: int
    replicas: int
    empirical: float
    ucl: float
    bound: float
    holds: bool


@dataclass
class ExitBoundReport:
    points: List[ExitPoint]
    passed: bool


def clopper_pearson_upper(hits: int, n: int, conf: float = 0.99) -> float:
    if hits >= n:
        return 1.0
    return float(stats.beta.ppf(conf, hits + 1, n - hits))


def verify_exit_bound(m: Manifold, x0, grid, eps: float = 1.0, replicas: int = 10_000,
                      dt: Optional[float] = None, seed: int = 0, conf: float = 0.99,
                      threads: int = 1, block_size: int = BLOCK_SIZE) -> ExitBoundReport:
    """Check ``P(sup_{t<=tau} d(W_t, x0) >= delta) <= bound`` on a grid of ``(delta, tau)``.

    The supremum is monitored on the simulation grid (default ``dt = tau/200``).
    ``L`` is the manifold's Ricci lower bound raised to at least 1.
    """
    x0 = m.check(x0)
    k, L = m.dim, max(1.0, m.ricci_lower_bound)
    grid = [(float(d), float(t)) for d, t in grid]
    # standard Brownian time is eps * tau
    bounds = {(d, t): exit_bound(k, L, eps * t, d) for d, t in grid}
    points = []
    for tau in sorted({t for _, t in grid}):
        step = dt if dt is not None else tau / 200

        def run(task, tau=tau, step=step):
            b, start, stop = task
            gen = rngmod.stream(seed, rngmod.BROWNIAN, int(round(tau * 1e9)), b)
            return brownian_batch(m, x0, eps, tau, step, stop - start, gen, track_max_dist=True)[1]

        maxd = np.concatenate(_map_blocks(run, list(rngmod.blocks(replicas, block_size)), threads))
        for d, t in grid:
            if t != tau:
                continue
            h = int(np.sum(maxd >= d))
            ucl = clopper_pearson_upper(h, replicas, conf)
            bnd = bounds[(d, t)]
            points.append(ExitPoint(t, d, h, replicas, h / replicas, ucl, bnd, ucl <= bnd))
    return ExitBoundReport(points, all(p.holds for p in points))


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


@dataclass
class ExperimentReport:
    config: dict
    estimates: List[RateEstimate]
    theory: float
    passed: bool
    wall_time: float
    tolerance: float = 0.15

    def to_json(self) -> dict:
        return {
            "version": SCHEMA_VERSION,
            "config": self.config,
            "estimates": [asdict(e) for e in self.estimates],
            "theory": self.theory,
            "pass": self.passed,
            "wall_time": self.wall_time,
            "tolerance": self.tolerance,
        }

    @classmethod
    def from_json(cls, data: dict) -> "ExperimentReport":
        version = data.get("version")
        if version != SCHEMA_VERSION:
            raise SchemaVersionError(f"report schema version {version!r}, expected {SCHEMA_VERSION}")
        missing = {"config", "estimates", "theory", "pass", "wall_time"} - set(data)
        if missing:
            raise ValueError(f"report is missing keys: {sorted(missing)}")
        return cls(
            data["config"],
            [RateEstimate(**e) for e in data["estimates"]],
            data["theory"],
            data["pass"],
            data["wall_time"],
            data.get("tolerance", 0.15),
        )


def rate_passes(fitted: float, theory: float, tolerance: float, floor: float = 0.02) -> bool:
    """Relative tolerance, or an absolute ``floor`` when the theoretical rate is 0."""
    if theory == 0:
        return abs(fitted) <= floor
    return abs(fitted - theory) <= tolerance * abs(theory)


def run_endpoint_experiment(manifold: Manifold, family: MeasureFamily, x0, target, delta=None,
                            levels=DEFAULT_LEVELS, replicas=100_000, seed: int = 0, threads: int = 1,
                            tolerance: float = 0.15, config: Optional[dict] = None) -> ExperimentReport:
    start = time.perf_counter()
    est = estimate_endpoint_rate(manifold, family, x0, target, delta, levels, replicas, seed, threads)
    theory = cramer_rate(RateModel.walk(family), x0, target)
    wall = time.perf_counter() - start
    cfg = dict(config or {})
    cfg.setdefault("manifold", manifold.spec())
    cfg.setdefault("family", family.spec())
    cfg.setdefault("x0", np.asarray(x0, dtype=float).tolist())
    cfg.setdefault("target", np.asarray(target, dtype=float).tolist())
    cfg.setdefault("seed", seed)
    return ExperimentReport(cfg, [est], theory, rate_passes(est.fitted_rate, theory, tolerance), wall,
                            tolerance)


def persist_report(r: ExperimentReport, path) -> None:
    """Write the report as JSON; floats use the shortest repr, which round-trips exactly."""
    with open(path, "w") as fh:
        json.dump(r.to_json(), fh, indent=2)


def load_report(path) -> ExperimentReport:
    with open(path) as fh:
        return ExperimentReport.from_json(json.load(fh))


def write_rate_table(est: RateEstimate, path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["n", "hits", "replicas", "log_prob"])
        for n, h, r, lp in est.table_rows():
            out.writerow([n, h, r, "" if lp is None else repr(lp)])
