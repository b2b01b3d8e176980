"""Riemannian Brownian motion through the orthonormal frame bundle.

A state is a point together with a g-orthonormal frame ``u: R^k -> T_x M``.
Brownian motion with generator ``(eps/2) Delta_M`` is the projection of the
horizontal Stratonovich SDE ``dU = sqrt(eps) H_i(U) o dB^i``. Over one step
with frozen noise ``db`` the horizontal flow is exactly the geodesic with
initial velocity ``sqrt(eps) u(db)`` carrying the frame by parallel transport
(rolling without slipping), which is what :func:`horizontal_step` does.

The module also has a Euclidean SDE integrator used as the small-noise
baseline and for the Ito/Stratonovich conversion checks.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DomainError
from .geometry import Manifold
from .rng import as_generator


@dataclass
class FrameState:
    x: np.ndarray
    frame: np.ndarray  # rows are the frame vectors


@dataclass
class BrownianPath:
    manifold: Manifold
    times: np.ndarray
    points: np.ndarray
    frames: np.ndarray
    driving_noise: np.ndarray  # db per step, shape (steps, k)

    @property
    def states(self):
        return [FrameState(x, f) for x, f in zip(self.points, self.frames)]

    def anti_development(self, eps: float = 1.0) -> np.ndarray:
        """Flat curve in R^k whose increments drive the path."""
        w = np.vstack([np.zeros((1, self.driving_noise.shape[1])), np.cumsum(self.driving_noise, axis=0)])
        return math.sqrt(eps) * w


def orthonormality_defect(m: Manifold, x, frame) -> float:
    """max |u^T G u - I| over entries."""
    gram = m.inner(x[..., None, None, :], frame[..., :, None, :], frame[..., None, :, :])
    return float(np.max(np.abs(gram - np.eye(frame.shape[-2]))))


def _step(m: Manifold, x, frame, db, eps):
    v = math.sqrt(eps) * np.einsum("...i,...ij->...j", db, frame)
    x_new = m.exp(x, v)
    frame_new = m.transport(x, v, frame)
    return x_new, m.orthonormalize(x_new, frame_new)


def horizontal_step(m: Manifold, s: FrameState, db, dt: float, eps: float = 1.0) -> FrameState:
    """One step of the horizontal SDE driven by the increment ``db ~ N(0, dt I)``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    db = np.asarray(db, dtype=float)
    if not np.all(np.isfinite(db)):
        raise ValueError("noise increment must be finite")
    x, frame = _step(m, s.x, s.frame, db, eps)
    return FrameState(x, frame)


def initial_frame(m: Manifold, x0) -> np.ndarray:
    """Deterministic smooth section of the frame bundle used at the start point."""
    return m.tangent_basis(x0)


def run_brownian(m: Manifold, x0, eps: float, T: float, dt: float, rng=None) -> BrownianPath:
    """Single Brownian path on ``ceil(T/dt)`` grid steps."""
    if eps < 0 or not T > 0 or not dt > 0:
        raise ValueError("need eps >= 0 and T, dt > 0")
    gen = as_generator(rng)
    x0 = m.check(x0)
    steps = int(math.ceil(T / dt - 1e-9))
    noise = gen.standard_normal((steps, m.dim)) * math.sqrt(dt)
    pts = np.empty((steps + 1, m.ambient_dim))
    frames = np.empty((steps + 1, m.dim, m.ambient_dim))
    x, frame = x0, initial_frame(m, x0)
    pts[0], frames[0] = x, frame
    for i in range(steps):
        if eps > 0:
            x, frame = _step(m, x, frame, noise[i], eps)
        pts[i + 1], frames[i + 1] = x, frame
    return BrownianPath(m, dt * np.arange(steps + 1), pts, frames, noise)


def brownian_batch(m: Manifold, x0, eps: float, T: float, dt: float, replicas: int,
                   gen: np.random.Generator, track_max_dist: bool = False):
    """Run ``replicas`` paths in lockstep.

    Returns ``(endpoints, max_dist)`` where ``max_dist`` is the running maximum
    of ``d(W_t, x0)`` over the grid (or None).
    """
    x0 = m.check(x0)
    steps = int(math.ceil(T / dt - 1e-9))
    x = np.broadcast_to(x0, (replicas, m.ambient_dim)).copy()
    frame = np.broadcast_to(initial_frame(m, x0), (replicas, m.dim, m.ambient_dim)).copy()
    max_dist = np.zeros(replicas) if track_max_dist else None
    for _ in range(steps):
        db = gen.standard_normal((replicas, m.dim)) * math.sqrt(dt)
        x, frame = _step(m, x, frame, db, eps)
        if track_max_dist:
            np.maximum(max_dist, m.dist(x, x0), out=max_dist)
    return x, max_dist


def coupled_batch(m: Manifold, x0, eps: float, T: float, dt: float, replicas: int,
                  gen: np.random.Generator):
    """Endpoints on the ``dt`` and ``dt/2`` grids driven by the same Brownian path.

    The fine run uses half-step increments; the coarse run uses their pairwise
    sums, so the difference of the two isolates the discretisation effect.
    """
    x0 = m.check(x0)
    steps = int(math.ceil(T / dt - 1e-9))
    frame0 = initial_frame(m, x0)
    xc = np.broadcast_to(x0, (replicas, m.ambient_dim)).copy()
    fc = np.broadcast_to(frame0, (replicas, m.dim, m.ambient_dim)).copy()
    xf, ff = xc.copy(), fc.copy()
    half = math.sqrt(dt / 2)
    for _ in range(steps):
        a = gen.standard_normal((replicas, m.dim)) * half
        b = gen.standard_normal((replicas, m.dim)) * half
        xf, ff = _step(m, xf, ff, a, eps)
        xf, ff = _step(m, xf, ff, b, eps)
        xc, fc = _step(m, xc, fc, a + b, eps)
    return xc, xf


def radial_exit_time(p: BrownianPath, x0, delta: float) -> Optional[float]:
    """First grid time with ``d(W_t, x0) >= delta``, or None."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    d = p.manifold.dist(p.points, np.asarray(x0, dtype=float))
    hit = np.nonzero(d >= delta)[0]
    return float(p.times[hit[0]]) if len(hit) else None


def exit_bound(k: int, L: float, tau: float, delta: float) -> float:
    """Upper bound on P(sup_{t<=tau} d(W_t, x0) >= delta) for Ric >= -L, L >= 1.

    Valid for ``delta > sqrt(2 k L tau)``.
    """
    if k < 1 or L < 1 or not tau > 0 or not delta > 0:
        raise DomainError("need k >= 1, L >= 1, tau > 0 and delta > 0")
    if not delta > math.sqrt(2.0 * k * L * tau):
        raise DomainError(f"delta={delta} must exceed sqrt(2 k L tau)={math.sqrt(2 * k * L * tau):.6g}")
    return 2.0 * math.exp(-0.5 * (k * L * tau - 0.5 * delta**2) ** 2 / (delta**2 * tau))


def write_brownian_csv(p: BrownianPath, path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["t"] + [f"coord_{i}" for i in range(p.points.shape[1])])
        for t, x in zip(p.times, p.points):
            out.writerow([repr(float(t))] + [repr(float(c)) for c in x])


# ---------------------------------------------------------------------------
# Euclidean small-noise SDE
# ---------------------------------------------------------------------------

SCHEMES = ("ito_euler", "stratonovich_heun", "ito_with_correction")
FD_STEP = 1e-5


def ito_correction(sigma: Callable, x, h: float = FD_STEP):
    """``(D sigma . sigma)_i = sum_{j,l} d_j sigma_il * sigma_jl`` by central differences."""
    x = np.asarray(x, dtype=float)
    s = sigma(x)
    d = x.shape[-1]
    out = np.zeros(x.shape)
    for j in range(d):
        e = np.zeros(d)
        e[j] = h
        ds = (sigma(x + e) - sigma(x - e)) / (2 * h)
        out = out + np.einsum("...il,...l->...i", ds, s[..., j, :])
    return out


def run_euclidean_sde(b: Callable, sigma: Callable, eps: float, x0, T: float, dt: float,
                      scheme: str = "stratonovich_heun", rng=None, dW=None) -> np.ndarray:
    """Integrate ``dY = b(Y) dt + sqrt(eps) sigma(Y) o dW`` (or the Ito reading).

    ``b(x)`` returns shape ``(..., d)`` and ``sigma(x)`` shape ``(..., d, m)``;
    both must broadcast over leading batch axes of ``x``. Schemes:

    ``ito_euler``
        Euler-Maruyama for the Ito equation ``dY = b dt + sqrt(eps) sigma dW``.
    ``stratonovich_heun``
        Heun predictor-corrector, consistent with the Stratonovich equation.
    ``ito_with_correction``
        Euler-Maruyama on the Ito form of the Stratonovich equation, i.e. with
        the extra drift ``(eps/2) (D sigma . sigma)``.

    Returns the path with shape ``(steps + 1,) + x0.shape``.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")
    x = np.asarray(x0, dtype=float)
    steps = int(math.ceil(T / dt - 1e-9))
    m_noise = np.asarray(sigma(x)).shape[-1]
    if dW is None:
        dW = as_generator(rng).standard_normal((steps,) + x.shape[:-1] + (m_noise,)) * math.sqrt(dt)
    se = math.sqrt(eps)

    def noise_term(y, dw):
        return se * np.einsum("...il,...l->...i", sigma(y), dw)

    path = np.empty((steps + 1,) + x.shape)
    path[0] = x
    for i in range(steps):
        dw = dW[i]
        if scheme == "ito_euler":
            x = x + b(x) * dt + noise_term(x, dw)
        elif scheme == "ito_with_correction":
            x = x + (b(x) + 0.5 * eps * ito_correction(sigma, x)) * dt + noise_term(x, dw)
        else:
            bx, nx = b(x), noise_term(x, dw)
            pred = x + bx * dt + nx
            x = x + 0.5 * (bx + b(pred)) * dt + 0.5 * (nx + noise_term(pred, dw))
        path[i + 1] = x
    return path
