import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geowalk import (
    Curve,
    CutLocusError,
    DegenerateCurveError,
    Euclidean,
    Hyperbolic2,
    InvalidPointError,
    Sphere,
    containment,
    distance,
    exp_map,
    geodesic_bvp,
    geodesic_curve,
    grad_sq_distance,
    log_map,
    metric_at,
    parallel_transport,
    parse_manifold,
)
from geowalk.geometry import curve_velocities, geodesic_ode, transport_ode

from conftest import random_point, random_tangent

NORTH = np.array([0.0, 0.0, 1.0])


# -- metric ---------------------------------------------------------------------


def test_metric_flat_is_identity():
    np.testing.assert_array_equal(metric_at(Euclidean(2), [0.3, -1.0]), np.eye(2))


@pytest.mark.parametrize("y, scale", [(1.0, 1.0), (2.0, 0.25)])
def test_metric_half_plane(y, scale):
    np.testing.assert_allclose(metric_at(Hyperbolic2(), [0.0, y]), scale * np.eye(2))


def test_metric_spd(model, rng):
    for _ in range(10):
        g = metric_at(model, random_point(model, rng))
        np.testing.assert_allclose(g, g.T)
        assert np.all(np.linalg.eigvalsh(g) > 0)


@pytest.mark.parametrize("m, x", [
    (Sphere(1.0), [1.0, 1.0, 0.0]),
    (Hyperbolic2(), [0.0, 0.0]),
    (Hyperbolic2(), [0.0, -1.0]),
    (Euclidean(2), [0.0]),
    (Euclidean(2), [np.nan, 0.0]),
])
def test_invalid_points(m, x):
    with pytest.raises(InvalidPointError):
        metric_at(m, x)


def test_parse_manifold():
    assert parse_manifold("euclidean:3") == Euclidean(3)
    assert parse_manifold("sphere:2") == Sphere(2.0)
    assert parse_manifold("sphere:1:3") == Sphere(1.0, dim=3)
    assert parse_manifold("hyperbolic2") == Hyperbolic2()
    with pytest.raises(ValueError, match="supported"):
        parse_manifold("torus")


# -- exp / log / distance -------------------------------------------------------


def test_exp_flat():
    np.testing.assert_allclose(exp_map(Euclidean(2), [1.0, 2.0], [0.5, -1.0]), [1.5, 1.0])


def test_exp_quarter_great_circle():
    np.testing.assert_allclose(exp_map(Sphere(1.0), NORTH, [math.pi / 2, 0, 0]), [1, 0, 0], atol=1e-15)


def test_exp_zero_vector(model, rng):
    x = random_point(model, rng)
    np.testing.assert_allclose(exp_map(model, x, np.zeros_like(x)), x)


def test_log_antipodal_raises():
    with pytest.raises(CutLocusError):
        log_map(Sphere(1.0), NORTH, -NORTH)
    # within the angular tolerance still counts as antipodal
    y = np.array([1e-10, 0.0, -1.0])
    with pytest.raises(CutLocusError):
        log_map(Sphere(1.0), NORTH, y / np.linalg.norm(y))


def test_log_flat():
    np.testing.assert_allclose(log_map(Euclidean(2), [1.0, 2.0], [0.0, 0.0]), [-1.0, -2.0])


def test_distance_examples():
    assert distance(Sphere(1.0), NORTH, [1.0, 0, 0]) == pytest.approx(math.pi / 2, abs=1e-15)
    assert distance(Hyperbolic2(), [0.0, 1.0], [0.0, math.e]) == pytest.approx(1.0, abs=1e-14)
    assert distance(Hyperbolic2(), [0.3, 0.7], [0.3, 0.7]) == 0.0


def test_hyperbolic_distance_formula(rng):
    # arcosh(1 + |x-y|^2 / (2 y1 y2)), independent of the hyperboloid route
    m = Hyperbolic2()
    for _ in range(50):
        x, y = random_point(m, rng), random_point(m, rng)
        ref = math.acosh(1 + np.sum((x - y) ** 2) / (2 * x[1] * y[1]))
        assert distance(m, x, y) == pytest.approx(ref, rel=1e-10, abs=1e-12)


def test_roundtrip_and_speed(model, rng):
    for _ in range(100):
        x = random_point(model, rng)
        v = random_tangent(model, x, rng)
        r = float(model.norm(x, v))
        lim = 0.9 * model.injectivity_radius(x)
        if r > lim:
            v = v * lim / r
        y = exp_map(model, x, v)
        np.testing.assert_allclose(log_map(model, x, y), v, atol=1e-8)
        assert distance(model, x, y) == pytest.approx(float(model.norm(x, v)), abs=1e-8)


def test_batched_matches_pointwise(model, rng):
    xs = np.array([random_point(model, rng) for _ in range(5)])
    vs = np.array([random_tangent(model, x, rng, 0.5) for x in xs])
    batch = model.exp(xs, vs)
    for x, v, y in zip(xs, vs, batch):
        np.testing.assert_allclose(exp_map(model, x, v), y, atol=1e-14)


def test_closed_form_matches_ode(model, rng):
    for _ in range(10):
        x = random_point(model, rng)
        v = random_tangent(model, x, rng, 0.8)
        np.testing.assert_allclose(geodesic_ode(model, x, v, step=1e-3), model.exp(x, v), atol=1e-8)


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.2, 5), st.floats(-1.5, 1.5), st.floats(-1.5, 1.5))
@settings(max_examples=60, deadline=None)
def test_hyperbolic_geodesic_property(a, b, y, u, w):
    m = Hyperbolic2()
    x = np.array([a, y])
    v = np.array([u, w]) * y  # unit-scale in the metric
    z = m.exp(x, v)
    assert z[1] > 0
    assert m.dist(x, z) == pytest.approx(float(m.norm(x, v)), rel=1e-9, abs=1e-12)
    np.testing.assert_allclose(m.log(x, z), v, rtol=1e-7, atol=1e-9)


# -- parallel transport --------------------------------------------------------


def _arc(m, a, b, num=200):
    v = m.log(a, b)
    return geodesic_curve(m, a, v, num=num).points


def test_octant_holonomy():
    m = Sphere(1.0)
    e1, e2 = np.array([1.0, 0, 0]), np.array([0.0, 1, 0])
    pts = np.vstack([_arc(m, NORTH, e1), _arc(m, e1, e2)[1:], _arc(m, e2, NORTH)[1:]])
    c = Curve(np.linspace(0, 1, len(pts)), pts)
    v = np.array([1.0, 0.0, 0.0])
    for method in ("closed", "ode"):
        w = parallel_transport(m, c, v, method=method)
        assert np.linalg.norm(w) == pytest.approx(1.0, abs=1e-10)
        angle = math.atan2(np.dot(np.cross(v, w), NORTH), np.dot(v, w))
        # enclosed area of the octant triangle is pi/2
        assert abs(angle) == pytest.approx(math.pi / 2, abs=1e-6)


def test_transport_own_velocity(model, rng):
    for _ in range(10):
        x = random_point(model, rng)
        v = random_tangent(model, x, rng, 0.7)
        c = geodesic_curve(model, x, v, num=40)
        np.testing.assert_allclose(parallel_transport(model, c, v), c.velocities[-1], atol=1e-10)


def test_transport_isometry_random_curves(model, rng):
    for _ in range(20):
        x = random_point(model, rng)
        pts = [x]
        for _ in range(30):
            pts.append(model.exp(pts[-1], random_tangent(model, pts[-1], rng, 0.1)))
        c = Curve(np.arange(len(pts), dtype=float), np.array(pts))
        u, w = random_tangent(model, x, rng), random_tangent(model, x, rng)
        tu, tw = parallel_transport(model, c, u), parallel_transport(model, c, w)
        assert float(model.inner(pts[-1], tu, tw)) == pytest.approx(float(model.inner(x, u, w)), abs=1e-8)


def test_transport_closed_vs_ode(model, rng):
    for _ in range(5):
        x = random_point(model, rng)
        v = random_tangent(model, x, rng, 0.8)
        w = random_tangent(model, x, rng)
        np.testing.assert_allclose(transport_ode(model, x, v, w, steps=400), model.transport(x, v, w),
                                   atol=1e-8)


def test_transport_covector_duality(model, rng):
    x = random_point(model, rng)
    pts = [x]
    for _ in range(5):
        pts.append(model.exp(pts[-1], random_tangent(model, pts[-1], rng, 0.2)))
    c = Curve(np.arange(6.0), np.array(pts))
    v = random_tangent(model, x, rng)
    p = model.flat(x, random_tangent(model, x, rng))
    tv = parallel_transport(model, c, v)
    tp = parallel_transport(model, c, p, covector=True)
    # pairing is preserved: (tau p)(tau v) = p(v)
    assert float(np.dot(tp, tv)) == pytest.approx(float(np.dot(p, v)), abs=1e-10)


def test_degenerate_curves():
    with pytest.raises(DegenerateCurveError):
        Curve([0.0, 0.0], [[0.0], [1.0]])
    with pytest.raises(DegenerateCurveError):
        Curve([0.0], [[0.0]])


def test_curve_velocities_second_order():
    m = Euclidean(1)
    t = np.linspace(0, 1, 11)
    pts = (t**2)[:, None]
    np.testing.assert_allclose(curve_velocities(m, t, pts)[:, 0], 2 * t, atol=1e-12)


# -- d^2 differentials ---------------------------------------------------------


def test_grad_sq_distance_flat():
    x, y = np.array([1.0, 2.0]), np.array([-0.5, 0.5])
    dx, dy = grad_sq_distance(Euclidean(2), x, y)
    np.testing.assert_allclose(dx, 2 * (x - y))
    np.testing.assert_allclose(dy, 2 * (y - x))


def test_grad_sq_distance_same_point(model, rng):
    x = random_point(model, rng)
    dx, dy = grad_sq_distance(model, x, x)
    assert np.all(dx == 0) and np.all(dy == 0)


def test_grad_sq_distance_finite_differences(model, rng):
    h = 1e-5
    for _ in range(10):
        x, y = random_point(model, rng), random_point(model, rng)
        if model.kind == "sphere" and model.dist(x, y) > 0.9 * math.pi * model.radius:
            continue
        dx, dy = grad_sq_distance(model, x, y)
        for e in model.tangent_basis(x):
            fd = (model.dist(model.exp(x, h * e), y) ** 2 - model.dist(model.exp(x, -h * e), y) ** 2) / (2 * h)
            assert float(np.dot(dx, e)) == pytest.approx(fd, abs=1e-6)
        for e in model.tangent_basis(y):
            fd = (model.dist(x, model.exp(y, h * e)) ** 2 - model.dist(x, model.exp(y, -h * e)) ** 2) / (2 * h)
            assert float(np.dot(dy, e)) == pytest.approx(fd, abs=1e-6)


def test_transport_identity_of_differentials(model, rng):
    # transporting d_x d^2 along the minimal geodesic gives -d_y d^2
    for _ in range(20):
        x, y = random_point(model, rng), random_point(model, rng)
        if model.kind == "sphere" and model.dist(x, y) > 0.9 * math.pi * model.radius:
            continue
        dx, dy = grad_sq_distance(model, x, y)
        v = model.log(x, y)
        moved = model.flat(y, model.transport(x, v, model.sharp(x, dx)))
        np.testing.assert_allclose(moved, -dy, atol=1e-7)


def test_grad_sq_distance_cut_locus():
    with pytest.raises(CutLocusError):
        grad_sq_distance(Sphere(1.0), NORTH, -NORTH)


# -- boundary value problem ----------------------------------------------------


def test_bvp_flat():
    sols = geodesic_bvp(Euclidean(2), [0.0, 1.0], [2.0, 3.0], 3)
    assert len(sols.velocities) == 1
    np.testing.assert_allclose(sols.velocities[0], [2.0, 2.0])


def test_bvp_sphere_windings():
    m = Sphere(1.0)
    sols = geodesic_bvp(m, NORTH, [1.0, 0, 0], 3)
    speeds = [float(m.norm(NORTH, v)) for v in sols.velocities]
    np.testing.assert_allclose(speeds, [math.pi / 2, 3 * math.pi / 2, 5 * math.pi / 2], atol=1e-12)
    assert max(sols.residuals) < 1e-8
    assert not sols.degenerate


def test_bvp_sphere_same_point():
    m = Sphere(1.0)
    sols = geodesic_bvp(m, NORTH, NORTH, 2)
    speeds = [float(m.norm(NORTH, v)) for v in sols.velocities]
    np.testing.assert_allclose(speeds, [0.0, 2 * math.pi], atol=1e-12)


def test_bvp_sphere_radius():
    m = Sphere(2.0)
    x = np.array([0.0, 0.0, 2.0])
    y = m.exp(x, np.array([0.7, 0.0, 0.0]))
    sols = geodesic_bvp(m, x, y, 4)
    speeds = [float(m.norm(x, v)) for v in sols.velocities]
    c = 2 * math.pi * 2.0
    np.testing.assert_allclose(speeds, [0.7, c - 0.7, c + 0.7, 2 * c - 0.7], atol=1e-12)
    assert max(sols.residuals) < 1e-8


def test_bvp_antipodal_degenerate():
    m = Sphere(1.0)
    sols = geodesic_bvp(m, NORTH, -NORTH, 4)
    assert sols.degenerate
    assert len(sols.velocities) == 4
    for v in sols.velocities:
        assert float(m.norm(NORTH, v)) == pytest.approx(math.pi)
    assert max(sols.residuals) < 1e-8


def test_bvp_hyperbolic_unique(rng):
    m = Hyperbolic2()
    x, y = random_point(m, rng), random_point(m, rng)
    sols = geodesic_bvp(m, x, y, 5)
    assert len(sols.velocities) == 1 and sols.residuals[0] < 1e-8


# -- containment ---------------------------------------------------------------


def test_containment_examples():
    val, dval = containment(Euclidean(1), [0.0], [1.0])
    assert val == pytest.approx(math.log(2))
    np.testing.assert_allclose(dval, [1.0])


def test_containment_zero_at_base(model, rng):
    x0 = random_point(model, rng)
    val, dval = containment(model, x0, x0)
    assert val == 0.0
    np.testing.assert_allclose(dval, 0.0, atol=1e-15)


def test_containment_hyperbolic_surrogate(rng):
    m = Hyperbolic2()
    x0, x = random_point(m, rng), random_point(m, rng)
    d = m.dist(x0, x)
    val, _ = containment(m, x0, x)
    assert val == pytest.approx(math.log1p(2 * (math.cosh(d) - 1)), rel=1e-10)


def test_containment_differential_fd(model, rng):
    h = 1e-6
    for _ in range(5):
        x0, x = random_point(model, rng), random_point(model, rng)
        _, dval = containment(model, x0, x)
        for e in model.tangent_basis(x):
            fd = (containment(model, x0, model.exp(x, h * e))[0]
                  - containment(model, x0, model.exp(x, -h * e))[0]) / (2 * h)
            assert float(np.dot(dval, e)) == pytest.approx(fd, abs=1e-6)


def test_containment_gradient_bounded(model, rng):
    x0 = model.origin()
    pts = []
    for _ in range(400):
        pts.append(model.exp(x0, random_tangent(model, x0, rng, rng.uniform(0, 6))))
    pts = np.array(pts)
    _, dval = containment(model, x0, pts)
    assert np.max(model.co_norm(pts, dval)) < 3
