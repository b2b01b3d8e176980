"""Consistent families of tangent-space measures.

Every family here is *radial*: ``mu_x`` depends on a tangent vector only
through its g(x)-norm, and the direction is uniform. Hence

    Lambda_x(p) = f(|p|_g(x))

for a one-dimensional profile ``f`` that does not depend on ``x``, which makes
the family invariant under parallel transport. All log-MGF and Legendre
computations reduce to this profile.

The direction factor of a radial law is the MGF of one coordinate of a uniform
unit vector in R^k,

    E exp(u * theta_1) = Gamma(nu + 1) (2/u)^nu I_nu(u),   nu = k/2 - 1,

and the uniform ball in R^k has the same form with ``nu = k/2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy import special

from .errors import NonConvergenceError
from .geometry import Manifold

#: value returned for Lambda* outside the closure of the mean range
SENTINEL = 1e18

NEWTON_TOL = 1e-10
MAX_ITER = 200


def _bessel_profile(nu: float, u):
    """log M, (log M)', (log M)'' for M(u) = Gamma(nu+1) (2/u)^nu I_nu(u), u >= 0."""
    u = np.asarray(u, dtype=float)
    var = 1.0 / (2 * nu + 2)
    kappa4 = 3.0 / ((2 * nu + 2) * (2 * nu + 4)) - 3.0 * var**2
    small = u < 1e-3
    us = np.where(small, 1.0, u)  # keeps the Bessel branch finite where unused

    # inf momenta propagate as nan/inf; callers decide whether that is an error
    with np.errstate(divide="ignore", invalid="ignore"):
        i0 = special.ive(nu, us)
        i1 = special.ive(nu + 1, us)
        logm = special.gammaln(nu + 1) + nu * np.log(2.0 / us) + np.log(i0) + us
        ratio = i1 / i0
        d2 = 1.0 - ratio**2 - (2 * nu + 1) * ratio / us

        logm = np.where(small, 0.5 * var * u**2 + kappa4 * u**4 / 24.0, logm)
        ratio = np.where(small, var * u + kappa4 * u**3 / 6.0, ratio)
        d2 = np.where(small, var + kappa4 * u**2 / 2.0, d2)
    return logm, ratio, d2


class ConjugateResult(NamedTuple):
    """Outcome of a Legendre transform evaluation.

    ``attained`` is False when the supremum is a limit (boundary of the mean
    range); ``in_domain`` is False when ``value`` is the :data:`SENTINEL`.
    """

    value: float
    argmax_p: np.ndarray
    iterations: int
    residual: float
    attained: bool = True
    in_domain: bool = True


@dataclass(frozen=True)
class MeasureFamily:
    """Base class; subclasses provide the radial profile and the norm sampler."""

    manifold: Manifold

    kind = "abstract"

    # radial profile ------------------------------------------------------
    def profile(self, s):
        """Return ``f(s), f'(s), f''(s)`` for ``s = |p|_g >= 0``."""
        raise NotImplementedError

    @property
    def mean_bound(self) -> float:
        """Supremum of ``f'``, i.e. the largest norm of an attainable mean."""
        return math.inf

    def sample_norms(self, rng: np.random.Generator, shape):
        raise NotImplementedError

    # sampling ------------------------------------------------------------
    def sample(self, x, rng: np.random.Generator):
        """One increment per point of ``x`` (batched)."""
        m = self.manifold
        g = m.gaussian_tangent(x, rng)
        nrm = m.norm(x, g)
        direction = g / np.where(nrm > 0, nrm, 1.0)[..., None]
        return self.sample_norms(rng, nrm.shape)[..., None] * direction

    # log-MGF -------------------------------------------------------------
    def log_mgf(self, x, p):
        s = self.manifold.co_norm(x, p)
        return self.profile(s)[0]

    def grad_log_mgf(self, x, p):
        """Gradient of Lambda_x at ``p``, a tangent vector at ``x``."""
        m = self.manifold
        s = m.co_norm(x, p)
        _, d1, d2 = self.profile(s)
        # d1/s -> f''(0) as s -> 0
        scale = np.where(s > 1e-12, d1 / np.where(s > 0, s, 1.0), d2)
        return scale[..., None] * m.sharp(x, p)

    # Legendre transform --------------------------------------------------
    def radial_conjugate(self, a: float, max_iter: int = MAX_ITER):
        """Solve ``sup_s {a s - f(s)}`` for ``a >= 0``.

        Returns ``(value, s_star, iterations, residual, attained, in_domain)``.
        Newton on ``f'(s) = a`` safeguarded by a doubling bracket and bisection.
        """
        if a < 0:
            raise ValueError("radial argument must be nonnegative")
        if a == 0.0:
            return 0.0, 0.0, 0, 0.0, True, True
        bound = self.mean_bound
        if a > bound * (1 + 1e-12):
            return SENTINEL, math.inf, 0, math.inf, False, False
        if a >= bound:
            return self._boundary_limit(a)

        lo, hi = 0.0, None
        s = a / float(self.profile(0.0)[2])
        it = 0
        residual = math.inf
        while it < max_iter:
            it += 1
            _, d1, d2 = (float(q) for q in self.profile(s))
            residual = abs(d1 - a)
            if residual < NEWTON_TOL * max(1.0, a):
                value = a * s - float(self.profile(s)[0])
                return value, s, it, residual, True, True
            if d1 < a:
                lo = s
            else:
                hi = s
            step = s - (d1 - a) / d2 if d2 > 0 else math.nan
            if hi is None:
                s = step if (np.isfinite(step) and step > s) else 2.0 * s + 1.0
            elif np.isfinite(step) and lo < step < hi:
                s = step
            else:
                s = 0.5 * (lo + hi)
        raise NonConvergenceError(
            f"Legendre transform did not converge after {max_iter} iterations "
            f"(residual {residual:.3e})",
            iterations=it,
            residual=residual,
        )

    def _boundary_limit(self, a):
        # a equals sup f': the supremum is approached as s -> infinity
        s, prev = 1.0, -math.inf
        it = 0
        while s < 1e12:
            it += 1
            val = a * s - float(self.profile(s)[0])
            if abs(val - prev) < 1e-10:
                return val, math.inf, it, 0.0, False, True
            prev = val
            s *= 2.0
        # logarithmic divergence (e.g. the uniform ball)
        return SENTINEL, math.inf, it, math.inf, False, False

    def legendre(self, x, v, max_iter: int = MAX_ITER) -> ConjugateResult:
        m = self.manifold
        v = np.asarray(v, dtype=float)
        a = float(m.norm(x, v))
        value, s, it, residual, attained, in_domain = self.radial_conjugate(a, max_iter)
        if a == 0.0 or not np.isfinite(s):
            p = np.zeros_like(v)
        else:
            p = (s / a) * m.flat(x, v)
        return ConjugateResult(float(value), p, it, float(residual), attained, in_domain)

    def spec(self) -> str:
        raise NotImplementedError


@dataclass(frozen=True)
class IsotropicGaussian(MeasureFamily):
    """Standard normal law on each tangent space: N(0, G^{-1}(x))."""

    kind = "gaussian"

    def profile(self, s):
        s = np.asarray(s, dtype=float)
        return 0.5 * s * s, s.copy(), np.ones_like(s)

    def sample(self, x, rng):
        return self.manifold.gaussian_tangent(x, rng)

    def sample_norms(self, rng, shape):
        return np.sqrt(rng.chisquare(self.manifold.dim, size=shape))

    def legendre(self, x, v, max_iter=MAX_ITER):
        m = self.manifold
        v = np.asarray(v, dtype=float)
        return ConjugateResult(0.5 * float(m.inner(x, v, v)), m.flat(x, v), 0, 0.0)

    def spec(self):
        return "gaussian"


@dataclass(frozen=True)
class UniformBall(MeasureFamily):
    """Uniform law on the g(x)-ball of radius ``radius``."""

    radius: float = 1.0
    kind = "uniform_ball"

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")

    def profile(self, s):
        r = self.radius
        f, d1, d2 = _bessel_profile(self.manifold.dim / 2.0, r * np.asarray(s, dtype=float))
        return f, r * d1, r * r * d2

    @property
    def mean_bound(self):
        return self.radius

    def sample_norms(self, rng, shape):
        return self.radius * rng.random(shape) ** (1.0 / self.manifold.dim)

    def spec(self):
        return f"uniform_ball:{self.radius:g}"


@dataclass(frozen=True)
class RadialNorm(MeasureFamily):
    """Norm drawn from a law ``nu``, direction uniform.

    ``nu`` is the discrete law ``sum_j weights[j] * delta(values[j])``. A
    continuous law can be supplied through :meth:`from_law`, which keeps the
    exact law for sampling and a Gauss-Legendre discretisation for the
    profile.
    """

    values: tuple = (1.0,)
    weights: tuple = (1.0,)
    law: Optional[object] = field(default=None, compare=False, repr=False)
    kind = "radial_norm"

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if vals.shape != w.shape or vals.ndim != 1 or len(vals) == 0:
            raise ValueError("values and weights must be equal-length 1-D sequences")
        if np.any(vals < 0) or np.any(w < 0) or not np.all(np.isfinite(vals)):
            raise ValueError("norm values and weights must be nonnegative and finite")
        if not np.isclose(w.sum(), 1.0, atol=1e-12):
            raise ValueError("weights must sum to 1")

    @classmethod
    def from_law(cls, manifold, law, nodes: int = 200):
        """Discretise a frozen ``scipy.stats`` law on [0, inf) with bounded support."""
        lo, hi = law.support()
        if not (np.isfinite(lo) and np.isfinite(hi)):
            lo, hi = law.ppf(1e-15), law.ppf(1 - 1e-15)
        t, w = np.polynomial.legendre.leggauss(nodes)
        a = 0.5 * (hi - lo) * t + 0.5 * (hi + lo)
        w = 0.5 * (hi - lo) * w * law.pdf(a)
        w = w / w.sum()
        return cls(manifold, tuple(a), tuple(w), law)

    @property
    def mean_bound(self):
        w = np.asarray(self.weights)
        return float(np.max(np.asarray(self.values)[w > 0]))

    def profile(self, s):
        s = np.asarray(s, dtype=float)
        nu = self.manifold.dim / 2.0 - 1.0
        a = np.asarray(self.values)
        logw = np.log(np.asarray(self.weights))
        f, r, d2 = _bessel_profile(nu, s[..., None] * a)
        terms = logw + f
        logm = special.logsumexp(terms, axis=-1)
        pi = np.exp(terms - logm[..., None])
        d1 = np.sum(pi * a * r, axis=-1)
        second = np.sum(pi * a * a * (d2 + r * r), axis=-1) - d1 * d1
        return logm, d1, second

    def sample_norms(self, rng, shape):
        if self.law is not None:
            return np.asarray(self.law.rvs(size=shape, random_state=rng), dtype=float)
        return rng.choice(np.asarray(self.values), size=shape, p=np.asarray(self.weights))

    def spec(self):
        vals = ",".join(f"{v:g}" for v in self.values)
        wts = ",".join(f"{w:g}" for w in self.weights)
        return f"radial_norm:{vals}@{wts}"


FAMILY_KINDS = ("gaussian", "uniform_ball", "radial_norm")


def parse_family(text: str, manifold: Manifold) -> MeasureFamily:
    """``gaussian``, ``uniform_ball:r`` or ``radial_norm:a1,a2@w1,w2``."""
    kind, _, arg = text.strip().lower().partition(":")
    if kind == "gaussian":
        return IsotropicGaussian(manifold)
    if kind in ("uniform_ball", "ball"):
        return UniformBall(manifold, float(arg) if arg else 1.0)
    if kind == "radial_norm":
        vals, _, wts = arg.partition("@")
        values = tuple(float(v) for v in vals.split(",")) if vals else (1.0,)
        if wts:
            weights = tuple(float(w) for w in wts.split(","))
        else:
            weights = tuple([1.0 / len(values)] * len(values))
        return RadialNorm(manifold, values, weights)
    raise ValueError(f"unknown measure family {kind!r}; supported: {', '.join(FAMILY_KINDS)}")


# -- module-level API -------------------------------------------------------


def sample_increment(fam: MeasureFamily, x, rng: np.random.Generator):
    x = fam.manifold.check(x)
    return fam.sample(x, rng)


def log_mgf(fam: MeasureFamily, x, p):
    x = fam.manifold.check(x)
    val = fam.log_mgf(x, np.asarray(p, dtype=float))
    if not np.all(np.isfinite(val)):
        raise ValueError("log-MGF is not finite: the norm law lacks exponential moments")
    return float(val) if np.ndim(val) == 0 else val


def legendre(fam: MeasureFamily, x, v, max_iter: int = MAX_ITER) -> ConjugateResult:
    return fam.legendre(fam.manifold.check(x), v, max_iter)


def log_mgf_mc(fam: MeasureFamily, x, p, rng: np.random.Generator, samples: int = 100_000):
    """Sampling estimate of Lambda_x(p) with a delta-method standard error."""
    m = fam.manifold
    x = m.check(x)
    xs = np.broadcast_to(x, (samples, x.shape[-1]))
    v = fam.sample(xs, rng)
    e = np.exp(np.sum(v * np.asarray(p, dtype=float), axis=-1))
    mean = e.mean()
    return float(np.log(mean)), float(e.std(ddof=1) / math.sqrt(samples) / mean)
