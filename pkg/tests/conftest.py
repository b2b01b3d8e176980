import numpy as np
import pytest

from geowalk import Euclidean, Hyperbolic2, Sphere

MODELS = {
    "euclidean1": Euclidean(1),
    "euclidean3": Euclidean(3),
    "sphere1": Sphere(1.0),
    "sphere2.5": Sphere(2.5),
    "sphere_s3": Sphere(1.0, dim=3),
    "hyperbolic2": Hyperbolic2(),
}


def random_point(m, rng):
    """A random point in a moderate region of the model."""
    if m.kind == "euclidean":
        return rng.normal(size=m.ambient_dim)
    if m.kind == "sphere":
        x = rng.normal(size=m.ambient_dim)
        return m.radius * x / np.linalg.norm(x)
    return np.array([rng.uniform(-2, 2), np.exp(rng.uniform(-1, 1))])


def random_tangent(m, x, rng, scale=1.0):
    basis = m.tangent_basis(x)
    return scale * rng.normal(size=m.dim) @ basis


@pytest.fixture(params=sorted(MODELS), ids=sorted(MODELS))
def model(request):
    return MODELS[request.param]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance results, filled by tests/test_acceptance.py and echoed at the end of the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num}: {'PASS' if ok else 'FAIL'} - {detail}")
