import math

import numpy as np
import pytest
from scipy import stats
from scipy.linalg import hadamard

from fgql.model import GroupedCoefficients, GroupedDesign
from fgql.simulation import (
    ErrorDistribution,
    SimulationScenario,
    acceptance_scenario,
    asymptotic_covariance,
    audit_assumptions,
    generate,
    growth_scenario,
    normality_report,
    rate_report,
    run_rate_study,
    run_replications,
    run_selection_study,
    selection_report,
)
from fgql.weights import TuningSchedule, default_schedule


def _scenario(n=200, family="normal", tau=0.5, **params):
    beta = GroupedCoefficients.from_groups([[1.0, 1.0], [1.0, 1.0], [0.0, 0.0]])
    return SimulationScenario(beta, n, ErrorDistribution(family, params, tau), seed=5)


def test_generate_zero_noise_is_exact():
    sc = _scenario(family="none")
    data = generate(sc, 0)
    assert np.array_equal(data.y, data.X @ sc.beta.values)


def test_generate_is_deterministic():
    sc = _scenario()
    a, b = generate(sc, 3), generate(sc, 3)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)
    c = generate(sc, 4)
    assert not np.array_equal(a.y, c.y)


def test_generate_median_errors_balanced():
    sc = _scenario(n=4000)
    data = generate(sc, 0)
    eps = data.y - data.X @ sc.beta.values
    assert abs(np.mean(eps < 0) - 0.5) <= 3 / math.sqrt(sc.n)


def test_generate_rejects_infeasible():
    with pytest.raises(ValueError, match="r = 6 >= n = 6"):
        generate(_scenario(n=6), 0)
    with pytest.raises(ValueError):
        generate(_scenario(), -1)


@pytest.mark.parametrize("family, params", [
    ("normal", {}), ("normal", {"scale": 2.5}), ("student_t", {"df": 3}),
    ("laplace", {}), ("custom", {"dist": stats.gamma(2.0)}),
])
@pytest.mark.parametrize("tau", [0.25, 0.5, 0.75])
def test_error_quantile_calibration(family, params, tau):
    err = ErrorDistribution(family, params, tau)
    assert abs(float(err.cdf(0.0)) - tau) <= 1e-10
    assert err.density_at_zero > 0
    draws = err.sample(np.random.default_rng(0), 20000)
    assert abs(np.mean(draws < 0) - tau) <= 3 / math.sqrt(20000)


def test_error_distribution_validation():
    with pytest.raises(ValueError):
        ErrorDistribution("cauchy")
    with pytest.raises(ValueError):
        ErrorDistribution("student_t", {})
    with pytest.raises(ValueError):
        ErrorDistribution("normal", {}, 1.0)


def test_normal_density_at_zero():
    assert ErrorDistribution().density_at_zero == pytest.approx(1 / math.sqrt(2 * math.pi))


def test_audit_identity_design():
    beta = GroupedCoefficients.from_groups([[1.0, 1.0, 1.0], [0.0, 0.0, 0.0]])
    sc = SimulationScenario(beta, 1000, seed=1)
    audit = audit_assumptions(sc, generate(sc, 0))
    assert 0.7 <= audit.lambda_min <= audit.lambda_max <= 1.3
    assert audit.verdicts["eigenvalues"] == "pass"
    assert audit.signal_floor == pytest.approx(math.sqrt(3))


def test_audit_orthonormal_design_exact():
    X = hadamard(8)[:, :3].astype(float)
    data = GroupedDesign(np.zeros(8), X, (1, 2))
    sc = SimulationScenario(GroupedCoefficients.from_groups([[1.0], [0.0, 0.0]]), 8)
    audit = audit_assumptions(sc, data)
    assert audit.lambda_min == 1.0 and audit.lambda_max == 1.0


def test_audit_degenerate_dimension_warns():
    rng = np.random.default_rng(2)
    n = 30
    data = GroupedDesign(rng.normal(size=n), rng.normal(size=(n, n)), (1,) * n)
    sc = SimulationScenario(GroupedCoefficients.zeros((1,) * n), n)
    audit = audit_assumptions(sc, data)
    assert audit.design_statistic >= 1.0
    assert audit.verdicts["design"] == "warn"
    assert audit.verdicts["dimension"] == "warn"


def test_asymptotic_covariance_examples():
    X = hadamard(8)[:, :4].astype(float)
    data = GroupedDesign(np.zeros(8), X, (2, 2))
    f0 = 1 / math.sqrt(2 * math.pi)
    cov = asymptotic_covariance(data, [0], 0.5, f0)
    assert cov == pytest.approx(np.eye(2) * math.pi / 2, abs=1e-12)
    assert asymptotic_covariance(data, [0, 1], 0.5, 0.5) == pytest.approx(np.eye(4))
    scaled = GroupedDesign(np.zeros(8), 2 * X, (2, 2))
    assert asymptotic_covariance(scaled, [1], 0.5, 0.5) == pytest.approx(np.eye(2) / 4)
    with pytest.raises(ValueError):
        asymptotic_covariance(data, [], 0.5, 0.5)
    singular = GroupedDesign(np.zeros(8), np.ones((8, 2)), (2,))
    with pytest.raises(np.linalg.LinAlgError):
        asymptotic_covariance(singular, [0], 0.5, 0.5)


def test_growth_scenario_dimensions():
    sc = growth_scenario()
    assert sc.p_at(400) == math.floor(400 ** 0.4)
    assert sc.p_at(1600) == math.floor(1600 ** 0.4)
    assert sc.beta_at(1600).values.size == 3 * sc.p_at(1600)
    assert sc.active_set == (0, 1)
    assert sc.fused_truth == (1,)


def test_acceptance_scenario_truth():
    sc = acceptance_scenario()
    assert sc.beta.p == 6 and sc.active_set == (0, 1) and sc.fused_truth == (1,)
    assert sc.h0 == pytest.approx(math.sqrt(3))


def test_unpenalized_schedule_never_selects_subset():
    sc = _scenario()
    schedule = TuningSchedule(0.25, kappa=0.0)
    report = run_selection_study(sc, schedule, replications=5, ns=(100,))
    assert report.selection_rate == [0.0]
    assert report.failures == [0]


def test_noiseless_selection_is_perfect():
    sc = _scenario(family="none")
    schedule, _ = default_schedule(100)
    report = run_selection_study(sc, schedule, replications=5, ns=(100, 200))
    assert report.selection_rate == [1.0, 1.0]
    assert report.fusion_rate == [1.0, 1.0]


def test_noiseless_rate_statistic_small():
    sc = _scenario(family="none")
    schedule, _ = default_schedule(100)
    report = run_rate_study(sc, schedule, replications=3, ns=(100, 400))
    # penalty bias alone, no sampling error
    assert all(e < 0.1 for e in report.median_error)


def test_reports_do_not_depend_on_task_order():
    sc = _scenario()
    schedule, _ = default_schedule(100)
    outcomes = run_replications(sc, schedule, (100,), 6)
    shuffled = [outcomes[i] for i in np.random.default_rng(0).permutation(len(outcomes))]
    for build in (selection_report, normality_report):
        a = build(sc, schedule, (100,), 6, outcomes).to_dict()
        b = build(sc, schedule, (100,), 6, shuffled).to_dict()
        assert a == b


def test_parallel_matches_serial(monkeypatch):
    sc = _scenario()
    schedule, _ = default_schedule(100)
    serial = run_replications(sc, schedule, (100,), 4)
    monkeypatch.setenv("FGQL_THREADS", "2")
    parallel = run_replications(sc, schedule, (100,), 4)
    assert [o.error_norm for o in serial] == [o.error_norm for o in parallel]


def test_failures_are_counted():
    sc = _scenario()
    schedule, _ = default_schedule(100)
    with pytest.raises(ValueError):
        run_replications(sc, schedule, (5,), 2)
    with pytest.raises(ValueError):
        run_replications(sc, schedule, (100,), 0)


def test_rate_report_reduces_to_root_n_for_fixed_p():
    sc = _scenario()
    schedule, _ = default_schedule(100)
    outcomes = run_replications(sc, schedule, (100, 400), 4)
    report = rate_report(sc, schedule, (100, 400), 4, outcomes)
    p = sc.beta.p
    for n, med, scaled in zip(report.ns, report.median_error, report.scaled_error):
        assert scaled == pytest.approx(med * math.sqrt(n / p))
