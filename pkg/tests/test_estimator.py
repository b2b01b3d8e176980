import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from geowalk import (
    AllZeroCountsError,
    DomainError,
    Euclidean,
    Hyperbolic2,
    IsotropicGaussian,
    SchemaVersionError,
    Sphere,
    estimate_endpoint_rate,
    estimate_heat_semigroup,
    load_report,
    persist_report,
    run_endpoint_experiment,
    verify_exit_bound,
)
from geowalk.estimator import (
    ExperimentReport,
    clopper_pearson_upper,
    default_delta,
    fit_rate,
    rate_passes,
    wilson_interval,
    write_rate_table,
)

E1 = Euclidean(1)
S2 = Sphere(1.0)
H2 = Hyperbolic2()


def test_wilson_interval_contains_estimate():
    lo, hi = wilson_interval(30, 1000)
    assert lo < 0.03 < hi
    lo, hi = wilson_interval(0, 1000)
    assert lo == pytest.approx(0.0, abs=1e-15) and hi > 0


@given(st.integers(1, 10_000), st.integers(0, 10_000))
@settings(max_examples=100)
def test_wilson_interval_in_unit_range(n, h):
    h = min(h, n)
    lo, hi = wilson_interval(h, n)
    assert -1e-15 <= lo <= h / n <= hi <= 1 + 1e-15


def test_fit_rate_recovers_exact_slope():
    # fixed-ball probabilities carry the local-limit factor: p_n ~ n^(k/2) exp(-I n)
    levels = [4, 8, 16, 32]
    R = 10**15
    hits = [int(round(R * math.exp(-0.7 * n) * n**0.5)) for n in levels]
    rate, se, dropped = fit_rate(levels, hits, [R] * 4, prefactor_power=0.5)
    assert rate == pytest.approx(0.7, rel=1e-4)
    assert se > 0 and dropped == []


def test_fit_rate_drops_zero_levels():
    rate, _, dropped = fit_rate([1, 2, 3, 4], [5000, 2500, 0, 0], [10_000] * 4)
    assert dropped == [3, 4]
    assert rate == pytest.approx(math.log(2), rel=1e-12)


def test_fit_rate_all_zero():
    with pytest.raises(AllZeroCountsError):
        fit_rate([8, 16], [0, 0], [1000, 1000])
    with pytest.raises(AllZeroCountsError):
        fit_rate([8, 16], [10, 0], [1000, 1000])


def test_gaussian_oracle_fit():
    # Euclidean(1) Gaussian: A_n ~ N(0, 1/n), so ball probabilities are exact
    x, d = 0.8, 0.05
    levels = [8, 16, 32, 64]
    R = 10**15
    hits = []
    for n in levels:
        sd = 1 / math.sqrt(n)
        hits.append(int(R * (stats.norm.cdf(x + d, scale=sd) - stats.norm.cdf(x - d, scale=sd))))
    rate, _, _ = fit_rate(levels, hits, [R] * 4, prefactor_power=0.5)
    assert rate == pytest.approx(0.32, rel=0.05)


def test_default_delta():
    assert default_delta(0.0) == 0.02
    assert default_delta(math.pi / 2) == pytest.approx(0.05 * math.pi / 2)


def test_euclidean_rate_estimate():
    est = estimate_endpoint_rate(E1, IsotropicGaussian(E1), [0.0], [0.8], delta=0.05, replicas=100_000)
    assert est.fitted_rate == pytest.approx(0.32, rel=0.15)
    assert est.hits[0] > est.hits[1] > 0
    assert est.log_probs[0] == pytest.approx(-math.log(est.hits[0] / 1e5) / 8)


def test_rate_at_start_point_is_zero():
    est = estimate_endpoint_rate(E1, IsotropicGaussian(E1), [0.0], [0.0], replicas=50_000)
    assert abs(est.fitted_rate) < 0.02


def test_thread_count_does_not_change_result():
    kw = dict(delta=0.1, levels=(4, 8), replicas=9000, seed=3, block_size=1000)
    a = estimate_endpoint_rate(S2, IsotropicGaussian(S2), S2.origin(), S2.exp(S2.origin(), np.array([0.6, 0, 0])),
                               threads=1, **kw)
    b = estimate_endpoint_rate(S2, IsotropicGaussian(S2), S2.origin(), S2.exp(S2.origin(), np.array([0.6, 0, 0])),
                               threads=4, **kw)
    assert a == b


def test_estimator_input_validation():
    fam = IsotropicGaussian(E1)
    with pytest.raises(ValueError):
        estimate_endpoint_rate(E1, fam, [0.0], [1.0], levels=(8, 4))
    with pytest.raises(ValueError):
        estimate_endpoint_rate(E1, fam, [0.0], [1.0], levels=(4, 8), replicas=[10, 20, 30])
    with pytest.raises(ValueError):
        estimate_endpoint_rate(E1, fam, [0.0], [1.0], delta=-1.0)
    with pytest.raises(AllZeroCountsError):
        estimate_endpoint_rate(E1, fam, [0.0], [9.0], delta=0.01, levels=(16, 32), replicas=1000)


# -- heat semigroup -------------------------------------------------------------


def test_heat_t_zero_exact():
    rec = estimate_heat_semigroup(S2, S2.origin(), 0.0)
    assert rec.empirical == rec.theory == 1.0


def test_heat_equator_symmetry():
    rec = estimate_heat_semigroup(S2, [1.0, 0.0, 0.0], 0.2, replicas=5000, dt=4e-3)
    assert rec.theory == 0.0
    assert abs(rec.empirical) < 3 * rec.stderr


def test_heat_decay_half():
    rec = estimate_heat_semigroup(S2, S2.origin(), 0.5, replicas=10_000, dt=2e-3, seed=1)
    assert rec.theory == pytest.approx(math.exp(-0.5))
    assert abs(rec.z_score) < 3


def test_heat_requires_sphere():
    with pytest.raises(ValueError):
        estimate_heat_semigroup(H2, H2.origin(), 0.1)


# -- exit bound -------------------------------------------------------------------


def test_clopper_pearson():
    assert clopper_pearson_upper(0, 1000, 0.99) == pytest.approx(1 - 0.01 ** (1 / 1000), rel=1e-9)
    assert clopper_pearson_upper(5, 5) == 1.0


def test_exit_bound_domain_error():
    with pytest.raises(DomainError):
        verify_exit_bound(H2, H2.origin(), [(math.sqrt(2 * 2 * 0.01), 0.01)], replicas=10)


def test_exit_bound_huge_delta():
    rep = verify_exit_bound(H2, H2.origin(), [(3.0, 0.01)], replicas=2000)
    p = rep.points[0]
    assert p.hits == 0 and p.empirical == 0.0 and p.empirical <= p.bound


def test_exit_bound_reference_point():
    rep = verify_exit_bound(H2, H2.origin(), [(0.5, 0.01)], replicas=5000, seed=2)
    assert rep.points[0].bound == pytest.approx(0.2204, abs=2e-4)
    assert rep.points[0].holds


# -- reports ------------------------------------------------------------------------


@pytest.fixture
def report():
    return run_endpoint_experiment(E1, IsotropicGaussian(E1), [0.0], [0.8], 0.05, (4, 8, 16), 20_000, seed=5)


def test_report_roundtrip(tmp_path, report):
    path = tmp_path / "r.json"
    persist_report(report, path)
    back = load_report(path)
    assert back == report
    assert set(json.loads(path.read_text())) == {"version", "config", "estimates", "theory", "pass",
                                                "wall_time", "tolerance"}


def test_report_schema_mismatch(tmp_path, report):
    data = report.to_json()
    data["version"] = 99
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(data))
    with pytest.raises(SchemaVersionError):
        load_report(path)


def test_report_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_report(tmp_path / "nope.json")


def test_report_missing_keys():
    with pytest.raises(ValueError, match="missing"):
        ExperimentReport.from_json({"version": 1, "config": {}})


def test_rate_table(tmp_path, report):
    write_rate_table(report.estimates[0], tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "n,hits,replicas,log_prob"
    assert len(lines) == 4


def test_rate_passes():
    assert rate_passes(0.33, 0.32, 0.15)
    assert not rate_passes(0.5, 0.32, 0.15)
    assert rate_passes(0.01, 0.0, 0.15)
    assert not rate_passes(0.05, 0.0, 0.15)
