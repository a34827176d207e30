import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fgql.model import GroupedCoefficients, GroupedDesign
from fgql.weights import (
    KAPPA_GRID,
    TuningSchedule,
    compute_weights,
    default_schedule,
    exponent_bounds,
    is_admissible,
    tune_kappa,
    validate_schedule,
    violations,
)


def test_compute_weights_examples():
    w = compute_weights(GroupedCoefficients.from_groups([[0.5, 0.0]]), gamma=1.0)
    assert w.w1[0] == 2.0

    same = GroupedCoefficients.from_groups([[1.0, 2.0], [1.0, 2.0]])
    for gamma in (0.5, 1.0, 2.0):
        w = compute_weights(same, gamma, cap=1e-10)
        assert w.w2[0] == pytest.approx(1e-10 ** -gamma)
        assert w.cap_applied_w2[0]
        assert not w.cap_applied_w1.any()

    w = compute_weights(GroupedCoefficients.from_groups([[0.0, 0.0], [3.0, 4.0]]), gamma=2.0)
    assert w.w2[0] == pytest.approx(1 / 25)
    assert w.cap_applied_w1[0] and np.isfinite(w.w1[0])


def test_compute_weights_rejects():
    coef = GroupedCoefficients.from_groups([[1.0]])
    with pytest.raises(ValueError):
        compute_weights(coef, gamma=0.0)
    with pytest.raises(ValueError):
        compute_weights(coef, cap=0.0)
    with pytest.raises(TypeError):
        compute_weights(np.ones(2))


def test_compute_weights_single_group_has_no_fusion_weight():
    w = compute_weights(GroupedCoefficients.from_groups([[1.0, 1.0]]))
    assert w.w2.shape == (0,)


@given(st.floats(0, 10), st.floats(0.01, 1), st.floats(0.1, 3))
def test_weight_monotone_and_finite(norm, factor, gamma):
    big = compute_weights(GroupedCoefficients([norm], (1,)), gamma).w1[0]
    small = compute_weights(GroupedCoefficients([norm * factor], (1,)), gamma).w1[0]
    assert math.isfinite(big) and math.isfinite(small)
    assert small >= big


def test_default_schedule_examples():
    schedule, (mu1, mu2) = default_schedule(10_000, 1.0, "fixed_p")
    assert schedule.exponent == 0.25
    assert mu1 == pytest.approx(10.0, rel=1e-14) and mu2 == mu1

    with pytest.raises(ValueError, match="mu_over_sqrt_n_vanishes"):
        default_schedule(100, 1.0, "fixed_p", exponent=0.5)

    with pytest.raises(ValueError) as err:
        default_schedule(100, 1.0, "growing_p", c=0.4, alpha=0.1)
    assert str(err.value).count("2/5") == 2


def test_default_schedule_ratio_and_kappa():
    _, (mu1, mu2) = default_schedule(16, 1.0, kappa=3.0, ratio=0.5)
    assert mu1 == pytest.approx(6.0) and mu2 == pytest.approx(3.0)


def test_default_schedule_growing_bad_alpha():
    with pytest.raises(ValueError, match="alpha"):
        default_schedule(100, 1.0, "growing_p", c=0.5, alpha=-0.5)


def test_validate_schedule_examples():
    records = validate_schedule(TuningSchedule(0.25, 1.0, "fixed_p"))
    assert len(records) == 3 and all(r.satisfied for r in records)

    bad = violations(TuningSchedule(0.0, 1.0, "fixed_p"))
    # with gamma = 1 the third limit coincides with the first
    assert [r.name for r in bad] == ["mu_diverges", "adaptive_term_diverges"]

    assert is_admissible(TuningSchedule(0.25, 1.0, "growing_p", c=0.0, alpha=0.0))


@given(st.floats(-1, 1), st.floats(0.1, 4), st.floats(0, 0.99), st.floats(-1, 1),
       st.floats(1e-3, 1e3))
def test_validation_invariant_under_kappa(e, gamma, c, alpha, kappa):
    for regime in ("fixed_p", "growing_p"):
        base = TuningSchedule(e, gamma, regime, c, alpha)
        scaled = base.with_kappa(kappa)
        assert validate_schedule(base) == validate_schedule(scaled)


@given(st.floats(0.1, 4), st.floats(0, 0.9), st.floats(0, 1))
def test_exponent_bounds_agree_with_validation(gamma, c, alpha):
    lower, upper = exponent_bounds(gamma, "growing_p", c, alpha)
    if lower < upper:
        mid = float((lower + upper) / 2)
        assert is_admissible(TuningSchedule(mid, gamma, "growing_p", c, alpha))


def test_exact_decimal_semantics():
    # 0.4 as a double is slightly above 2/5; the check uses the decimal value
    lower, upper = exponent_bounds(1.0, "growing_p", 0.4, 0.1)
    assert lower == upper == Fraction(2, 5)


def test_tune_kappa_picks_from_grid():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((120, 4))
    y = X @ np.array([1.0, 1.0, 0.0, 0.0]) + rng.standard_normal(120)
    data = GroupedDesign(y, X, (2, 2))
    schedule, _ = default_schedule(120)
    best, errors = tune_kappa(data, 0.5, schedule, folds=3, grid=(0.25, 1.0, 4.0))
    assert best.kappa in (0.25, 1.0, 4.0)
    assert errors.shape == (3,) and np.all(errors > 0)
    assert best.kappa == (0.25, 1.0, 4.0)[int(np.argmin(errors))]
    assert len(KAPPA_GRID) == 9 and KAPPA_GRID[0] == 1 / 16 and KAPPA_GRID[-1] == 16
