"""Hamiltonians, Lagrangians and the rate functionals built from them.

Two models are supported:

* ``walk`` -- rescaled geodesic random walk with a radial family; the
  Hamiltonian is the log-MGF ``H(x, p) = Lambda_x(p)`` and the Lagrangian is
  its Legendre transform.
* ``brownian`` -- small-noise Brownian motion, ``H(x, p) = |p|^2 / 2`` and
  ``L(x, v) = |v|^2 / 2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, List, NamedTuple, Optional

import numpy as np
from scipy import optimize

from . import rng as rngmod
from .errors import CutLocusError, NonConvergenceError
from .geometry import Curve, Manifold, geodesic_bvp
from .measures import SENTINEL, MeasureFamily

MODEL_KINDS = ("walk", "brownian")


@dataclass(frozen=True)
class RateModel:
    manifold: Manifold
    kind: str = "brownian"
    family: Optional[MeasureFamily] = None

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.kind == "walk":
            if self.family is None:
                raise ValueError("a walk model needs a measure family")
            if self.family.manifold != self.manifold:
                raise ValueError("family and model live on different manifolds")

    @classmethod
    def walk(cls, family: MeasureFamily) -> "RateModel":
        return cls(family.manifold, "walk", family)

    @classmethod
    def brownian(cls, manifold: Manifold) -> "RateModel":
        return cls(manifold, "brownian")

    @property
    def name(self) -> str:
        return f"walk[{self.family.spec()}]" if self.kind == "walk" else "brownian"

    # pointwise -----------------------------------------------------------
    def H(self, x, p):
        if self.kind == "walk":
            return self.family.log_mgf(x, p)
        return 0.5 * self.manifold.co_inner(x, p, p)

    def grad_H(self, x, p):
        """``nabla_p H(x, p)``, a tangent vector at ``x``."""
        if self.kind == "walk":
            return self.family.grad_log_mgf(x, p)
        return self.manifold.sharp(x, p)

    def L(self, x, v):
        if self.kind == "walk":
            return self.family.legendre(x, v).value
        return 0.5 * float(self.manifold.inner(x, v, v))


# -- pointwise API ------------------------------------------------------------


def hamiltonian(rm: RateModel, x, p) -> float:
    x = rm.manifold.check(x)
    return float(rm.H(x, np.asarray(p, dtype=float)))


def lagrangian(rm: RateModel, x, v) -> float:
    """Legendre transform of the Hamiltonian in the velocity variable.

    Returns :data:`~geowalk.measures.SENTINEL` for velocities outside the
    closure of the mean range of a bounded family.
    """
    x = rm.manifold.check(x)
    return float(rm.L(x, np.asarray(v, dtype=float)))


# -- path action ---------------------------------------------------------------


class ActionReport(NamedTuple):
    value: float
    per_segment: np.ndarray
    flags: List[int]


def path_action(rm: RateModel, c: Curve) -> ActionReport:
    """Composite trapezoid rule for ``int L(gamma, gamma')`` along a sampled curve.

    Velocities are estimated from the samples when the curve has none.
    ``flags`` lists the segments touching an out-of-domain velocity.
    """
    m = rm.manifold
    c = c.with_velocities(m)
    pts = m.check(c.points)
    lag = np.array([rm.L(x, v) for x, v in zip(pts, c.velocities)])
    bad = lag >= SENTINEL
    per = 0.5 * (lag[:-1] + lag[1:]) * np.diff(c.times)
    flags = [i for i in range(len(per)) if bad[i] or bad[i + 1]]
    return ActionReport(float(np.sum(per)), per, flags)


# -- Cramer rate -----------------------------------------------------------------


@dataclass
class CramerRecord:
    model: str
    x0: list
    x: list
    rate: float
    geodesic_speed: float
    degenerate_flag: bool

    def to_json(self) -> dict:
        return {
            "model": self.model,
            "x0": self.x0,
            "x": self.x,
            "rate": self.rate,
            "geodesic_speed": self.geodesic_speed,
            "degenerate_flag": self.degenerate_flag,
        }


def cramer_details(rm: RateModel, x0, x, max_geodesics: int = 4) -> CramerRecord:
    """Minimise ``Lambda*_{x0}(v)`` over geodesics ``exp(x0, v) = x``.

    For radial families ``Lambda*`` increases with ``|v|``, so the first
    ``max_geodesics`` solutions in order of speed contain the minimiser.
    """
    m = rm.manifold
    x0, x = m.check(x0), m.check(x)
    sols = geodesic_bvp(m, x0, x, max_geodesics)
    best, best_v = math.inf, sols.velocities[0]
    for v in sols.velocities:
        val = rm.L(x0, v)
        if val < best:
            best, best_v = val, v
    return CramerRecord(rm.name, x0.tolist(), x.tolist(), float(best),
                        float(m.norm(x0, best_v)), bool(sols.degenerate))


def cramer_rate(rm: RateModel, x0, x, max_geodesics: int = 4) -> float:
    """Endpoint rate ``I(x)`` of the rescaled walk started at ``x0``."""
    return cramer_details(rm, x0, x, max_geodesics).rate


# -- variational semigroup -------------------------------------------------------


class SemigroupResult(NamedTuple):
    value: float
    converged: bool
    path: np.ndarray


def _discrete_action(rm: RateModel, pts, dt):
    m = rm.manifold
    total = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        v = m.log(a, b, check_cut=False) / dt
        total += dt * rm.L(a, v)
    return total


def variational_semigroup(rm: RateModel, f: Callable, t: float, x, segments: int = 16,
                          starts: int = 8, seed: int = 0) -> SemigroupResult:
    """Best-found ``sup_gamma { f(gamma(t)) - int_0^t L(gamma, gamma') ds }``, ``gamma(0) = x``.

    Paths are piecewise geodesic through ``segments`` free control points,
    each parametrised by normal coordinates around a reference point.
    Each start runs L-BFGS up to three times, re-centring the references in
    between; ``converged`` reports whether the best start settled. The first
    start is the constant path, the others shoot to random endpoints.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    m = rm.manifold
    x = m.check(x)
    dt = t / segments
    k = m.dim
    gen = rngmod.stream(seed, rngmod.SEMIGROUP)

    def build(refs, bases, w):
        w = w.reshape(segments, k)
        pts = m.exp(refs, np.einsum("ni,nij->nj", w, bases))
        return np.vstack([x[None, :], pts])

    def negJ(w, refs, bases):
        pts = build(refs, bases, w)
        try:
            val = float(f(pts[-1])) - _discrete_action(rm, pts, dt)
        except CutLocusError:
            return 1e12
        return -val if np.isfinite(val) else 1e12

    def initial(i):
        if i == 0:
            return np.broadcast_to(x, (segments, x.shape[0])).copy()
        target = m.gaussian_tangent(x, gen) * math.sqrt(max(t, 1e-3)) * (1.0 + i / 2)
        s = np.linspace(1.0 / segments, 1.0, segments)[:, None]
        return m.exp(np.broadcast_to(x, (segments, x.shape[0])), s * target)

    results = []
    for i in range(starts):
        refs = initial(i)
        prev, converged, pts = None, False, None
        for _round in range(3):
            bases = m.tangent_basis(refs)
            res = optimize.minimize(negJ, np.zeros(segments * k), args=(refs, bases),
                                    method="L-BFGS-B", options={"maxiter": 2000, "gtol": 1e-10,
                                                                "ftol": 1e-15})
            pts = build(refs, bases, res.x)
            refs = pts[1:]
            if prev is not None and abs(prev - res.fun) < 1e-10:
                converged = bool(res.success) or abs(prev - res.fun) < 1e-12
                break
            prev = res.fun
        results.append((-negJ(np.zeros(segments * k), refs, m.tangent_basis(refs)), converged, pts))
    # deterministic argmax, ties broken by start index
    best = max(range(len(results)), key=lambda j: (results[j][0], -j))
    return SemigroupResult(*results[best])


# -- characteristic flow ---------------------------------------------------------

GRAD_STEP = 1e-5


def differential(m: Manifold, f: Callable, x, h: float = GRAD_STEP):
    """Central-difference ``df(x)`` in normal coordinates, returned as a covector."""
    basis = m.tangent_basis(x)
    coef = np.array([(f(m.exp(x, h * e)) - f(m.exp(x, -h * e))) / (2 * h) for e in basis])
    return m.flat(x, np.einsum("i,ij->j", coef, basis))


def characteristic_flow(rm: RateModel, f: Callable, x0, T: float, dt: float,
                        grad: Optional[Callable] = None) -> Curve:
    """Integrate ``x' = Q_f(x) = nabla_p H(x, df(x))`` with geodesic RK4.

    Stage velocities are evaluated at geodesically displaced points and
    transported back before being combined. ``grad(x)`` may supply ``df`` as
    a covector; otherwise central differences are used. The returned curve
    carries ``Q_f`` as its velocities.
    """
    if not T > 0 or not dt > 0:
        raise ValueError("T and dt must be positive")
    m = rm.manifold
    x = m.check(x0)
    df = grad or (lambda y: differential(m, f, y))

    def Q(y):
        q = rm.grad_H(y, df(y))
        if not np.all(np.isfinite(q)):
            raise NonConvergenceError("characteristic velocity diverged; reduce the step")
        return q

    def back(y, q):
        return m.transport(y, m.log(y, x, check_cut=False), q)

    steps = int(math.ceil(T / dt - 1e-9))
    h = T / steps
    pts, vel = [x], [Q(x)]
    for _ in range(steps):
        k1 = vel[-1]
        y2 = m.exp(x, 0.5 * h * k1)
        k2 = back(y2, Q(y2))
        y3 = m.exp(x, 0.5 * h * k2)
        k3 = back(y3, Q(y3))
        y4 = m.exp(x, h * k3)
        k4 = back(y4, Q(y4))
        x = m.exp(x, h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0)
        pts.append(x)
        vel.append(Q(x))
    return Curve(h * np.arange(steps + 1), np.array(pts), np.array(vel))


def hamiltonian_identity_residuals(rm: RateModel, c: Curve, grad: Callable) -> np.ndarray:
    """``|H(x, df) - (<x', df> - L(x, x'))|`` at each sample of a characteristic."""
    out = []
    for y, v in zip(c.points, c.velocities):
        p = grad(y)
        out.append(abs(rm.H(y, p) - (float(np.dot(v, p)) - rm.L(y, v))))
    return np.array(out)


def containment_hamiltonian_sup(rm: RateModel, x0, points) -> float:
    """``max H(x, d Upsilon(x))`` over the given points."""
    from .geometry import containment

    m = rm.manifold
    _, dups = containment(m, x0, points)
    return float(np.max([rm.H(x, p) for x, p in zip(np.asarray(points), dups)]))
