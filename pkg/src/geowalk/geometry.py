"""Concrete Riemannian manifolds and their geodesic primitives.

Three models are provided, each with closed forms for every primitive:

* :class:`Euclidean` -- Cartesian coordinates on R^k.
* :class:`Sphere` -- the round k-sphere of radius ``r`` embedded in R^(k+1).
* :class:`Hyperbolic2` -- the hyperbolic plane in upper half-plane coordinates
  ``(x, y)``, ``y > 0``, metric ``(dx^2 + dy^2) / y^2``. Closed forms are
  evaluated on the hyperboloid and pulled back to the chart.

Points, tangent vectors and covectors are plain float arrays whose last axis
holds the coordinates of the representation; leading axes are batch axes and
broadcast. On the sphere a covector is represented by the ambient vector
tangent to the sphere that induces it through the Euclidean inner product, so
for the sphere ``flat`` and ``sharp`` are both the tangent projection.

Generic geodesic and transport ODEs integrated with RK4 live next to the
closed forms and are used to cross-validate them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .errors import CutLocusError, DegenerateCurveError, InvalidPointError

#: angular distance to the antipode below which a sphere pair is treated as cut
CUT_TOL = 1e-9


def _dot(a, b):
    return np.sum(a * b, axis=-1)


def _norm(a):
    return np.sqrt(np.sum(a * a, axis=-1))


class Manifold:
    """Interface shared by the concrete models.

    Subclasses implement the primitives on batched arrays. The module-level
    functions (:func:`exp_map`, :func:`log_map`, ...) validate their inputs
    and delegate here.
    """

    kind: str = "abstract"
    dim: int
    ambient_dim: int
    ricci_lower_bound: float

    # -- points -----------------------------------------------------------
    def check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.ambient_dim,):
            raise InvalidPointError(
                f"{self.kind} points need {self.ambient_dim} coordinates, got shape {x.shape}"
            )
        if not np.all(np.isfinite(x)):
            raise InvalidPointError("point has non-finite coordinates")
        return x

    def normalize(self, x):
        return x

    def project(self, x, v):
        """Orthogonal projection of a representation vector onto T_x M."""
        return v

    def origin(self) -> np.ndarray:
        raise NotImplementedError

    def injectivity_radius(self, x) -> float:
        return math.inf

    # -- metric -----------------------------------------------------------
    def metric(self, x) -> np.ndarray:
        raise NotImplementedError

    def conformal_factor(self, x):
        """Scalar ``c(x)`` with ``<u, v>_g = c(x) * u.v`` on the representation."""
        return np.ones(np.shape(x)[:-1])

    def inner(self, x, u, v):
        return self.conformal_factor(x) * _dot(u, v)

    def norm(self, x, v):
        return np.sqrt(np.maximum(self.inner(x, v, v), 0.0))

    def flat(self, x, v):
        return self.conformal_factor(x)[..., None] * self.project(x, v)

    def sharp(self, x, p):
        return self.project(x, p) / self.conformal_factor(x)[..., None]

    def co_norm(self, x, p):
        return self.norm(x, self.sharp(x, p))

    def co_inner(self, x, p, q):
        return self.inner(x, self.sharp(x, p), self.sharp(x, q))

    def tangent_basis(self, x) -> np.ndarray:
        """g-orthonormal basis of T_x M, shape ``(..., dim, ambient_dim)``."""
        raise NotImplementedError

    def orthonormalize(self, x, frame):
        """Gram-Schmidt in the g(x) inner product; rows of ``frame`` are vectors."""
        frame = self.project(x[..., None, :], frame)
        out = np.empty_like(frame)
        for i in range(frame.shape[-2]):
            w = frame[..., i, :]
            for j in range(i):
                w = w - self.inner(x, w, out[..., j, :])[..., None] * out[..., j, :]
            out[..., i, :] = w / self.norm(x, w)[..., None]
        return out

    def gaussian_tangent(self, x, rng: np.random.Generator):
        """Draw V ~ N(0, G^{-1}(x)), i.e. a standard normal vector of T_x M."""
        raise NotImplementedError

    # -- geodesics --------------------------------------------------------
    def exp(self, x, v):
        raise NotImplementedError

    def log(self, x, y, check_cut=True):
        raise NotImplementedError

    def dist(self, x, y):
        raise NotImplementedError

    def transport(self, x, v, w):
        """Parallel transport of ``w`` along ``t -> exp(x, t v)``, ``t in [0, 1]``.

        ``w`` may carry one extra axis before the coordinate axis (a frame).
        """
        raise NotImplementedError

    def geodesic_accel(self, x, v):
        """Second derivative of a geodesic through ``x`` with velocity ``v``."""
        raise NotImplementedError

    def transport_rate(self, x, xdot, w):
        """d/dt of a parallel field ``w`` along a curve with velocity ``xdot``."""
        raise NotImplementedError

    def geodesic_solutions(self, x, y, max_solutions):
        v = self.log(x, y)
        return [v], False

    def containment_rho(self, x0, x):
        """Smooth proper surrogate for d^2(x, x0) and its differential."""
        raise NotImplementedError

    def spec(self) -> str:
        raise NotImplementedError


@dataclass(frozen=True)
class Euclidean(Manifold):
    dim: int = 2
    kind: str = field(default="euclidean", init=False)
    ricci_lower_bound: float = field(default=0.0, init=False)

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")

    @property
    def ambient_dim(self):
        return self.dim

    def origin(self):
        return np.zeros(self.dim)

    def metric(self, x):
        return np.broadcast_to(np.eye(self.dim), np.shape(x)[:-1] + (self.dim, self.dim)).copy()

    def tangent_basis(self, x):
        return np.broadcast_to(np.eye(self.dim), np.shape(x)[:-1] + (self.dim, self.dim)).copy()

    def gaussian_tangent(self, x, rng):
        return rng.standard_normal(np.shape(x))

    def exp(self, x, v):
        return x + v

    def log(self, x, y, check_cut=True):
        return y - x

    def dist(self, x, y):
        return _norm(y - x)

    def transport(self, x, v, w):
        return np.array(w, dtype=float, copy=True)

    def geodesic_accel(self, x, v):
        return np.zeros_like(v)

    def transport_rate(self, x, xdot, w):
        return np.zeros_like(w)

    def containment_rho(self, x0, x):
        d = x - x0
        return _dot(d, d), 2.0 * d

    def spec(self):
        return f"euclidean:{self.dim}"


@dataclass(frozen=True)
class Sphere(Manifold):
    radius: float = 1.0
    dim: int = 2
    kind: str = field(default="sphere", init=False)
    ricci_lower_bound: float = field(default=0.0, init=False)

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("sphere radius must be positive")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")

    @property
    def ambient_dim(self):
        return self.dim + 1

    def check(self, x):
        x = super().check(x)
        if np.any(np.abs(_norm(x) - self.radius) > 1e-8 * max(1.0, self.radius)):
            raise InvalidPointError(f"point is not on the sphere of radius {self.radius}")
        return x

    def normalize(self, x):
        return self.radius * x / _norm(x)[..., None]

    def project(self, x, v):
        return v - (_dot(x, v) / self.radius**2)[..., None] * x

    def origin(self):
        """North pole."""
        x = np.zeros(self.ambient_dim)
        x[-1] = self.radius
        return x

    def injectivity_radius(self, x):
        return math.pi * self.radius

    def metric(self, x):
        # Gram matrix of tangent_basis(x), which is orthonormal
        return np.broadcast_to(np.eye(self.dim), np.shape(x)[:-1] + (self.dim, self.dim)).copy()

    def tangent_basis(self, x):
        x = np.asarray(x, dtype=float)
        n = self.ambient_dim
        # start from the coordinate axes, dropping the one closest to x
        drop = np.argmax(np.abs(x), axis=-1)
        idx = np.arange(n)
        keep = np.sort(
            np.where(idx == drop[..., None], n, idx), axis=-1
        )[..., : self.dim]
        eye = np.eye(n)
        frame = eye[keep]
        return self.orthonormalize(x, frame)

    def gaussian_tangent(self, x, rng):
        return self.project(x, rng.standard_normal(np.shape(x)))

    def exp(self, x, v):
        nv = _norm(v)
        theta = nv / self.radius
        out = np.cos(theta)[..., None] * x + np.sinc(theta / np.pi)[..., None] * v
        return self.normalize(out)

    def _angle(self, x, y):
        c = _dot(x, y) / self.radius**2
        s = _norm(y - c[..., None] * x) / self.radius
        return np.arctan2(s, c), c

    def log(self, x, y, check_cut=True):
        theta, c = self._angle(x, y)
        if check_cut and np.any(np.pi - theta < CUT_TOL):
            raise CutLocusError("points are antipodal; the minimal geodesic is not unique")
        u = y - c[..., None] * x
        out = u / np.sinc(theta / np.pi)[..., None]
        return np.where(np.all(x == y, axis=-1)[..., None], 0.0, out)

    def dist(self, x, y):
        return self.radius * self._angle(x, y)[0]

    def transport(self, x, v, w):
        w = np.asarray(w, dtype=float)
        nv = _norm(v)
        safe = np.where(nv > 0, nv, 1.0)
        u = v / safe[..., None]
        theta = nv / self.radius
        xh = x / self.radius
        if w.ndim > np.ndim(v):
            u, xh, theta = u[..., None, :], xh[..., None, :], theta[..., None]
        a = _dot(u, w)
        shift = (np.cos(theta) - 1.0)[..., None] * u - np.sin(theta)[..., None] * xh
        return w + a[..., None] * shift

    def geodesic_accel(self, x, v):
        return -(_dot(v, v) / self.radius**2)[..., None] * x

    def transport_rate(self, x, xdot, w):
        if w.ndim > np.ndim(x):
            x, xdot = x[..., None, :], xdot[..., None, :]
        return -(_dot(w, xdot) / self.radius**2)[..., None] * x

    def geodesic_solutions(self, x, y, max_solutions):
        r = self.radius
        loop = 2.0 * np.pi * r
        theta, _ = self._angle(x, y)
        basis = self.tangent_basis(x)
        if np.pi - theta < CUT_TOL:
            # the minimal geodesics form a circle of directions
            phis = 2.0 * np.pi * np.arange(max_solutions) / max_solutions
            sols = [np.pi * r * (np.cos(p) * basis[0] + np.sin(p) * basis[min(1, self.dim - 1)])
                    for p in phis]
            return sols, True
        if theta < 1e-15:
            return [basis[0] * loop * j for j in range(max_solutions)], False
        d = r * theta
        u = self.log(x, y)
        u = u / _norm(u)
        sols = []
        j = 0
        while len(sols) < max_solutions:
            sols.append(u * (d + loop * j))
            if len(sols) < max_solutions:
                sols.append(-u * (loop * (j + 1) - d))
            j += 1
        return sols, False

    def containment_rho(self, x0, x):
        # chordal |x - x0|^2 = 2 r^2 - 2 <x, x0> on the sphere, exact zero at x0
        d = x - x0
        rho = _dot(d, d)
        return rho, self.project(x, -2.0 * np.broadcast_to(x0, np.shape(x)))

    def spec(self):
        if self.dim == 2:
            return f"sphere:{self.radius:g}"
        return f"sphere:{self.radius:g}:{self.dim}"


def _mink(a, b):
    return -a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1] + a[..., 2] * b[..., 2]


@dataclass(frozen=True)
class Hyperbolic2(Manifold):
    """Upper half-plane model of the hyperbolic plane (curvature -1)."""

    dim: int = field(default=2, init=False)
    kind: str = field(default="hyperbolic2", init=False)
    ricci_lower_bound: float = field(default=1.0, init=False)

    @property
    def ambient_dim(self):
        return 2

    def check(self, x):
        x = super().check(x)
        if np.any(x[..., 1] <= 0):
            raise InvalidPointError("half-plane points need a positive second coordinate")
        return x

    def origin(self):
        return np.array([0.0, 1.0])

    def conformal_factor(self, x):
        return 1.0 / x[..., 1] ** 2

    def metric(self, x):
        x = np.asarray(x, dtype=float)
        return self.conformal_factor(x)[..., None, None] * np.eye(2)

    def tangent_basis(self, x):
        x = np.asarray(x, dtype=float)
        return x[..., 1, None, None] * np.eye(2)

    def gaussian_tangent(self, x, rng):
        return x[..., 1, None] * rng.standard_normal(np.shape(x))

    # hyperboloid <-> half-plane, an isometry
    @staticmethod
    def _up(z):
        x, y = z[..., 0], z[..., 1]
        q = x * x + y * y
        return np.stack([(q + 1) / (2 * y), x / y, (q - 1) / (2 * y)], axis=-1)

    @staticmethod
    def _down(X):
        y = 1.0 / (X[..., 0] - X[..., 2])
        return np.stack([X[..., 1] * y, y], axis=-1)

    @staticmethod
    def _push(z, v):
        x, y = z[..., 0], z[..., 1]
        if v.ndim > z.ndim:
            x, y = x[..., None], y[..., None]
        vx, vy = v[..., 0], v[..., 1]
        return np.stack(
            [
                (x / y) * vx + (0.5 - (x * x + 1) / (2 * y * y)) * vy,
                vx / y - (x / (y * y)) * vy,
                (x / y) * vx + (0.5 - (x * x - 1) / (2 * y * y)) * vy,
            ],
            axis=-1,
        )

    @staticmethod
    def _pull(X, W):
        y = 1.0 / (X[..., 0] - X[..., 2])
        X1 = X[..., 1]
        if W.ndim > X.ndim:
            y, X1 = y[..., None], X1[..., None]
        vy = -y * y * (W[..., 0] - W[..., 2])
        vx = y * W[..., 1] + X1 * vy
        return np.stack([vx, vy], axis=-1)

    def exp(self, x, v):
        X = self._up(x)
        W = self._push(x, v)
        s = np.sqrt(np.maximum(_mink(W, W), 0.0))
        # sinh(s)/s, stable at 0
        shc = np.where(s > 1e-8, np.sinh(s) / np.where(s > 0, s, 1.0), 1.0 + s * s / 6)
        Y = np.cosh(s)[..., None] * X + shc[..., None] * W
        return self._down(Y)

    def log(self, x, y, check_cut=True):
        X, Y = self._up(x), self._up(y)
        s = self.dist(x, y)
        c = -_mink(X, Y)
        u = Y - c[..., None] * X
        ratio = np.where(s > 1e-8, s / np.sinh(np.where(s > 0, s, 1.0)), 1.0 - s * s / 6)
        out = self._pull(X, ratio[..., None] * u)
        # the hyperboloid round trip leaves ~1e-16 residue at y == x
        return np.where(np.all(x == y, axis=-1)[..., None], 0.0, out)

    def dist(self, x, y):
        dx = x - y
        q = _dot(dx, dx) / (4.0 * x[..., 1] * y[..., 1])
        return 2.0 * np.arcsinh(np.sqrt(q))

    def transport(self, x, v, w):
        w = np.asarray(w, dtype=float)
        X = self._up(x)
        V = self._push(x, v)
        Wh = self._push(x, w)
        s = np.sqrt(np.maximum(_mink(V, V), 0.0))
        safe = np.where(s > 0, s, 1.0)
        U = V / safe[..., None]
        Xb = X
        if w.ndim > np.ndim(v):
            U, Xb, s = U[..., None, :], X[..., None, :], s[..., None]
        a = _mink(U, Wh)
        T = Wh + a[..., None] * ((np.cosh(s) - 1.0)[..., None] * U + np.sinh(s)[..., None] * Xb)
        Y = self._up(self.exp(x, v))
        return self._pull(Y, T)

    def geodesic_accel(self, x, v):
        y = x[..., 1]
        vx, vy = v[..., 0], v[..., 1]
        return np.stack([2 * vx * vy / y, (vy * vy - vx * vx) / y], axis=-1)

    def transport_rate(self, x, xdot, w):
        y, cx, cy = x[..., 1], xdot[..., 0], xdot[..., 1]
        if w.ndim > np.ndim(x):
            y, cx, cy = y[..., None], cx[..., None], cy[..., None]
        wx, wy = w[..., 0], w[..., 1]
        return np.stack([(cx * wy + cy * wx) / y, -(cx * wx - cy * wy) / y], axis=-1)

    def containment_rho(self, x0, x):
        dz = x - x0
        q = _dot(dz, dz)
        y, y0 = x[..., 1], x0[..., 1]
        rho = q / (y * y0)
        drho = np.stack([2 * dz[..., 0] / (y * y0), 2 * dz[..., 1] / (y * y0) - q / (y * y * y0)], axis=-1)
        return rho, drho

    def spec(self):
        return "hyperbolic2"


MANIFOLD_KINDS = ("euclidean", "sphere", "hyperbolic2")


def parse_manifold(text: str) -> Manifold:
    """Build a manifold from ``euclidean:k``, ``sphere:r[:k]`` or ``hyperbolic2``."""
    parts = text.strip().lower().split(":")
    kind, args = parts[0], parts[1:]
    try:
        if kind == "euclidean":
            return Euclidean(int(args[0]) if args else 2)
        if kind == "sphere":
            r = float(args[0]) if args else 1.0
            k = int(args[1]) if len(args) > 1 else 2
            return Sphere(r, k)
        if kind in ("hyperbolic2", "hyperbolic"):
            return Hyperbolic2()
    except (ValueError, IndexError) as exc:
        raise ValueError(f"bad manifold parameters in {text!r}: {exc}") from None
    raise ValueError(f"unknown manifold kind {kind!r}; supported: {', '.join(MANIFOLD_KINDS)}")


# ---------------------------------------------------------------------------
# curves
# ---------------------------------------------------------------------------


@dataclass
class Curve:
    """A sampled curve ``t_i -> points[i]`` with optional velocities."""

    times: np.ndarray
    points: np.ndarray
    velocities: Optional[np.ndarray] = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.points = np.asarray(self.points, dtype=float)
        if self.times.ndim != 1 or len(self.times) < 2:
            raise DegenerateCurveError("a curve needs at least two sample times")
        if np.any(np.diff(self.times) <= 0):
            raise DegenerateCurveError("curve times must be strictly increasing")
        if len(self.points) != len(self.times):
            raise ValueError("points and times have different lengths")
        if self.velocities is not None:
            self.velocities = np.asarray(self.velocities, dtype=float)
            if self.velocities.shape != self.points.shape:
                raise ValueError("velocities must align with points")

    def with_velocities(self, m: Manifold) -> "Curve":
        if self.velocities is not None:
            return self
        return Curve(self.times, self.points, curve_velocities(m, self.times, self.points))


def curve_velocities(m: Manifold, times, points):
    """Central differences in the representation, projected to the tangent spaces."""
    t = np.asarray(times, dtype=float)
    p = np.asarray(points, dtype=float)
    vel = np.empty_like(p)
    vel[1:-1] = (p[2:] - p[:-2]) / (t[2:] - t[:-2])[:, None]
    # second-order one-sided stencils at the ends
    if len(t) >= 3:
        h0, h1 = t[1] - t[0], t[2] - t[1]
        vel[0] = (-(2 * h0 + h1) / (h0 * (h0 + h1)) * p[0] + (h0 + h1) / (h0 * h1) * p[1]
                  - h0 / (h1 * (h0 + h1)) * p[2])
        g0, g1 = t[-1] - t[-2], t[-2] - t[-3]
        vel[-1] = ((2 * g0 + g1) / (g0 * (g0 + g1)) * p[-1] - (g0 + g1) / (g0 * g1) * p[-2]
                   + g0 / (g1 * (g0 + g1)) * p[-3])
    else:
        vel[0] = vel[1] = (p[1] - p[0]) / (t[1] - t[0])
    return m.project(p, vel)


def geodesic_curve(m: Manifold, x, v, num: int = 101, t_end: float = 1.0) -> Curve:
    """Sample ``t -> exp(x, t v)`` on ``[0, t_end]`` with exact velocities."""
    x = m.check(x)
    t = np.linspace(0.0, t_end, num)
    pts = m.exp(x[None, :], t[:, None] * v[None, :])
    vel = m.transport(np.broadcast_to(x, pts.shape), t[:, None] * v[None, :],
                      np.broadcast_to(v, pts.shape))
    return Curve(t, pts, vel)


# ---------------------------------------------------------------------------
# public primitives
# ---------------------------------------------------------------------------


def metric_at(m: Manifold, x) -> np.ndarray:
    """Metric coefficient matrix at ``x``.

    Chart models use their coordinate frame; the sphere uses the orthonormal
    basis from :meth:`Manifold.tangent_basis`, so its matrix is the identity.
    """
    return m.metric(m.check(x))


def exp_map(m: Manifold, x, v) -> np.ndarray:
    x = m.check(x)
    return m.exp(x, np.asarray(v, dtype=float))


def log_map(m: Manifold, x, y) -> np.ndarray:
    """Initial velocity of the minimal geodesic from ``x`` to ``y`` (unit time).

    Raises :class:`CutLocusError` for antipodal points on the sphere.
    """
    return m.log(m.check(x), m.check(y))


def distance(m: Manifold, x, y):
    d = m.dist(m.check(x), m.check(y))
    return float(d) if np.ndim(d) == 0 else d


def parallel_transport(m: Manifold, c: Curve, v, method: str = "closed", covector: bool = False):
    """Transport ``v`` from ``c.points[0]`` to ``c.points[-1]``.

    The curve is followed through the geodesic segments joining consecutive
    samples, so the samples must be closer than the injectivity radius.
    ``method="ode"`` integrates the transport equation with RK4 instead of
    using the closed form. Covectors are handled by duality.
    """
    if method not in ("closed", "ode"):
        raise ValueError(f"unknown transport method {method!r}")
    pts = m.check(c.points)
    w = np.asarray(v, dtype=float)
    if covector:
        w = m.sharp(pts[0], w)
    for a, b in zip(pts[:-1], pts[1:]):
        seg = m.log(a, b)
        if method == "closed":
            w = m.transport(a, seg, w)
        else:
            w = transport_ode(m, a, seg, w)
        w = m.project(b, w)
    if covector:
        w = m.flat(pts[-1], w)
    return w


def grad_sq_distance(m: Manifold, x, y):
    """Differentials of ``d^2`` in each argument, as covectors.

    Returns ``(d_x d^2(x, y), d_y d^2(x, y))`` = ``(-2 v^flat, 2 (tau v)^flat)``
    where ``v = log_x(y)`` and ``tau v`` is the final velocity of the minimal
    geodesic.
    """
    x, y = m.check(x), m.check(y)
    v = m.log(x, y)
    end_vel = m.transport(x, v, v)
    return -2.0 * m.flat(x, v), 2.0 * m.flat(y, end_vel)


class BVPSolutions(NamedTuple):
    velocities: list
    degenerate: bool
    residuals: list


def geodesic_bvp(m: Manifold, x, y, max_solutions: int = 1) -> BVPSolutions:
    """Initial velocities ``v`` with ``exp(x, v) = y``, sorted by speed.

    On the sphere the great-circle windings are enumerated; for antipodal
    points the returned vectors sample the circle of minimal solutions and
    ``degenerate`` is set.
    """
    if max_solutions < 1:
        raise ValueError("max_solutions must be >= 1")
    x, y = m.check(x), m.check(y)
    sols, degenerate = m.geodesic_solutions(x, y, max_solutions)
    sols = sorted((np.asarray(s, dtype=float) for s in sols), key=lambda s: float(m.norm(x, s)))
    res = [float(_norm(m.exp(x, s) - y)) for s in sols]
    return BVPSolutions(sols, degenerate, res)


def containment(m: Manifold, x0, x):
    """Containment function ``log(1 + rho(x))`` and its differential.

    ``rho`` is a smooth stand-in for ``d^2(x, x0)``: ``|x - x0|^2`` in flat
    space and on the sphere (chordal), ``2 (cosh d - 1)`` on the hyperbolic
    plane. It vanishes only at ``x0`` and has proper sublevel sets.
    """
    x0, x = m.check(x0), m.check(x)
    rho, drho = m.containment_rho(x0, x)
    val = np.log1p(rho)
    dval = drho / (1.0 + rho)[..., None]
    return (float(val) if np.ndim(val) == 0 else val), dval


# ---------------------------------------------------------------------------
# RK4 cross-checks
# ---------------------------------------------------------------------------


def _rk4(rhs, state, h, steps):
    for _ in range(steps):
        k1 = rhs(state)
        k2 = rhs([s + 0.5 * h * k for s, k in zip(state, k1)])
        k3 = rhs([s + 0.5 * h * k for s, k in zip(state, k2)])
        k4 = rhs([s + h * k for s, k in zip(state, k3)])
        state = [s + h / 6.0 * (a + 2 * b + 2 * c + d) for s, a, b, c, d in zip(state, k1, k2, k3, k4)]
    return state


def geodesic_ode(m: Manifold, x, v, t: float = 1.0, step: Optional[float] = None, tol: float = 1e-9,
                 max_halvings: int = 12):
    """Integrate the geodesic equation with RK4.

    With ``step`` given a single fixed-step run is made. Otherwise the step
    starts at ``1e-3 * t`` and is halved until two successive refinements
    agree to ``tol``.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)

    def rhs(s):
        return [s[1], m.geodesic_accel(s[0], s[1])]

    def run(h):
        steps = max(1, int(round(t / h)))
        return _rk4(rhs, [x, v], t / steps, steps)[0]

    if step is not None:
        return m.normalize(run(step))
    h = 1e-3 * t
    prev = run(h)
    for _ in range(max_halvings):
        h /= 2
        cur = run(h)
        if np.max(np.abs(cur - prev)) < tol:
            return m.normalize(cur)
        prev = cur
    return m.normalize(prev)


def transport_ode(m: Manifold, x, v, w, steps: int = 200):
    """Transport ``w`` along the geodesic ``exp(x, t v)`` by RK4 on the joint system."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)

    def rhs(s):
        return [s[1], m.geodesic_accel(s[0], s[1]), m.transport_rate(s[0], s[1], s[2])]

    return _rk4(rhs, [x, v, w], 1.0 / steps, steps)[2]
