"""Adaptive penalty weights and tuning-parameter schedules.

Tuning parameters follow power laws ``mu_n = kappa * n**e``.  Whether a
schedule is admissible depends only on the exponent ``e`` (and on ``gamma``,
``c``, ``alpha``), never on ``kappa``; the checks below are exact rational
inequalities on those exponents.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Literal

import numpy as np

from .model import FitConfig, GroupedCoefficients, GroupedDesign, quantile_process

Regime = Literal["fixed_p", "growing_p"]

DEFAULT_CAP = 1e-10
KAPPA_GRID = tuple(2.0 ** k for k in range(-4, 5))


@dataclass(frozen=True)
class AdaptiveWeights:
    """Group weights ``w1`` (one per group) and fusion weights ``w2`` (one per successive pair).

    ``w2[k]`` belongs to the pair of groups ``(k, k + 1)``.
    """

    w1: np.ndarray
    w2: np.ndarray
    gamma: float = 1.0
    cap_applied_w1: np.ndarray = field(default=None)
    cap_applied_w2: np.ndarray = field(default=None)

    def __post_init__(self):
        w1 = np.asarray(self.w1, dtype=float).reshape(-1)
        w2 = np.asarray(self.w2, dtype=float).reshape(-1)
        if w2.shape[0] != max(w1.shape[0] - 1, 0):
            raise ValueError(f"{w1.shape[0]} group weights need {w1.shape[0] - 1} fusion weights")
        if not (np.all(np.isfinite(w1)) and np.all(np.isfinite(w2))):
            raise ValueError("weights must be finite")
        if np.any(w1 < 0) or np.any(w2 < 0):
            raise ValueError("weights must be nonnegative")
        object.__setattr__(self, "w1", w1)
        object.__setattr__(self, "w2", w2)
        for name, ref in (("cap_applied_w1", w1), ("cap_applied_w2", w2)):
            flags = getattr(self, name)
            flags = np.zeros(ref.shape, bool) if flags is None else np.asarray(flags, bool)
            object.__setattr__(self, name, flags)

    @classmethod
    def uniform(cls, p: int) -> "AdaptiveWeights":
        return cls(np.ones(p), np.ones(max(p - 1, 0)))

    @property
    def p(self) -> int:
        return self.w1.shape[0]


def compute_weights(pilot, gamma: float = 1.0, cap: float = DEFAULT_CAP) -> AdaptiveWeights:
    """Adaptive weights ``max(norm, cap) ** -gamma`` from a pilot fit.

    ``pilot`` is a ``FitResult`` or ``GroupedCoefficients``.  The cap keeps
    the weight of an exactly-zero pilot group finite (but huge).
    """
    if not (math.isfinite(gamma) and gamma > 0):
        raise ValueError(f"gamma must be positive, got {gamma}")
    if not (math.isfinite(cap) and cap > 0):
        raise ValueError(f"cap must be positive, got {cap}")
    coef = getattr(pilot, "coefficients", pilot)
    if not isinstance(coef, GroupedCoefficients):
        raise TypeError("pilot must be a FitResult or GroupedCoefficients")
    norms = coef.norms()
    diffs = coef.difference_norms() if coef.p > 1 else np.zeros(0)
    capped1 = norms < cap
    capped2 = diffs < cap
    w1 = np.maximum(norms, cap) ** (-gamma)
    w2 = np.maximum(diffs, cap) ** (-gamma)
    return AdaptiveWeights(w1, w2, gamma, capped1, capped2)


def _exact(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    # decimal literal semantics: 0.4 means 2/5, not the nearest binary double
    return Fraction(repr(float(x)))


@dataclass(frozen=True)
class ConditionRecord:
    name: str
    inequality: str
    satisfied: bool


@dataclass(frozen=True)
class TuningSchedule:
    """``mu1 = kappa * n**exponent`` and ``mu2 = ratio * mu1``."""

    exponent: float
    gamma: float = 1.0
    regime: Regime = "fixed_p"
    c: float = 0.0
    alpha: float = 0.0
    kappa: float = 1.0
    ratio: float = 1.0

    def __post_init__(self):
        if self.regime not in ("fixed_p", "growing_p"):
            raise ValueError(f"unknown regime {self.regime!r}")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if not (self.kappa >= 0 and self.ratio >= 0):
            raise ValueError("kappa and ratio must be nonnegative")

    def mu(self, n: int) -> tuple[float, float]:
        mu1 = self.kappa * float(n) ** self.exponent
        return mu1, self.ratio * mu1

    def with_kappa(self, kappa: float) -> "TuningSchedule":
        return replace(self, kappa=kappa)


def exponent_bounds(gamma, regime: Regime = "fixed_p", c=0, alpha=0):
    """Open interval ``(lower, upper)`` of admissible exponents, as exact fractions."""
    g, c_, a_ = _exact(gamma), _exact(c), _exact(alpha)
    if regime == "fixed_p":
        return max(Fraction(0), (1 - g) / 2), Fraction(1, 2)
    lower = max(Fraction(0), (c_ * (1 + g) - g + 1) / 2)
    upper = (1 - c_) / 2 + a_ * g
    return lower, upper


def validate_schedule(schedule: TuningSchedule) -> list[ConditionRecord]:
    """One record per rate condition on the tuning exponent.

    fixed_p: ``mu -> inf``, ``mu / sqrt(n) -> 0``, ``n**((gamma-1)/2) mu -> inf``.
    growing_p: ``mu -> inf``, ``mu n**((c-1)/2 - alpha gamma) -> 0``,
    ``mu n**((-c(1+gamma) + gamma - 1)/2) -> inf``, plus the parameter
    ranges ``0 <= c < 1`` and ``alpha > (c-1)/2``.
    """
    e, g = _exact(schedule.exponent), _exact(schedule.gamma)
    records = [ConditionRecord("mu_diverges", f"e = {e} > 0", e > 0)]
    if schedule.regime == "fixed_p":
        records.append(ConditionRecord(
            "mu_over_sqrt_n_vanishes", f"e - 1/2 = {e - Fraction(1, 2)} < 0", e < Fraction(1, 2)))
        s = e + (g - 1) / 2
        records.append(ConditionRecord(
            "adaptive_term_diverges", f"e + (gamma-1)/2 = {s} > 0", s > 0))
        return records
    c, a = _exact(schedule.c), _exact(schedule.alpha)
    records.append(ConditionRecord(
        "growth_exponent_range", f"0 <= c = {c} < 1", 0 <= c < 1))
    records.append(ConditionRecord(
        "signal_exponent_range", f"alpha - (c-1)/2 = {a - (c - 1) / 2} > 0", a > (c - 1) / 2))
    s = e + (c - 1) / 2 - a * g
    records.append(ConditionRecord(
        "rate_condition", f"e + (c-1)/2 - alpha*gamma = {s} < 0", s < 0))
    t = e + (-c * (1 + g) + g - 1) / 2
    records.append(ConditionRecord(
        "selection_condition", f"e + (-c(1+gamma) + gamma - 1)/2 = {t} > 0", t > 0))
    return records


def violations(schedule: TuningSchedule) -> list[ConditionRecord]:
    return [rec for rec in validate_schedule(schedule) if not rec.satisfied]


def is_admissible(schedule: TuningSchedule) -> bool:
    return not violations(schedule)


def default_schedule(n: int, gamma: float = 1.0, regime: Regime = "fixed_p",
                     c: float = 0.0, alpha: float = 0.0, kappa: float = 1.0,
                     ratio: float = 1.0, exponent: float | None = None):
    """Schedule for sample size ``n`` and the resulting ``(mu1, mu2)``.

    Without an explicit ``exponent`` the midpoint of the admissible interval
    is used (``e = 1/4`` for fixed p and ``gamma = 1``).  Raises
    ``ValueError`` naming the violated conditions when no admissible
    exponent exists or the given one is inadmissible.
    """
    if n < 1:
        raise ValueError("n must be positive")
    if exponent is None:
        lower, upper = exponent_bounds(gamma, regime, c, alpha)
        if regime == "growing_p":
            ranges = [r for r in validate_schedule(
                TuningSchedule(float(upper), gamma, regime, c, alpha))
                if r.name.endswith("_range") and not r.satisfied]
            if ranges:
                raise ValueError("inadmissible parameters: "
                                 + "; ".join(r.inequality for r in ranges))
        if not lower < upper:
            raise ValueError(
                f"no admissible exponent: need e > {lower} (selection/divergence bound) "
                f"and e < {upper} (rate bound)")
        exponent = float((lower + upper) / 2)
    schedule = TuningSchedule(exponent, gamma, regime, c, alpha, kappa, ratio)
    bad = violations(schedule)
    if bad:
        raise ValueError("inadmissible schedule: " + "; ".join(
            f"{r.name} fails ({r.inequality})" for r in bad))
    return schedule, schedule.mu(n)


def tune_kappa(data: GroupedDesign, tau: float, schedule: TuningSchedule,
               folds: int = 5, seed: int = 0, grid=KAPPA_GRID, controls=None):
    """Pick ``kappa`` from ``grid`` by k-fold check-loss validation error.

    A heuristic: rate conditions say nothing about constants.  The pilot and
    weights are refitted inside every fold.  Returns ``(best_schedule, errors)``
    where ``errors[k]`` is the summed held-out loss for ``grid[k]``.
    """
    from .solver import fit, pilot_fit

    rng = np.random.default_rng(seed)
    order = rng.permutation(data.n)
    chunks = np.array_split(order, folds)
    errors = np.zeros(len(grid))
    for hold in chunks:
        train = np.setdiff1d(order, hold)
        train_data = GroupedDesign(data.y[train], data.X[train], data.group_sizes)
        test_data = GroupedDesign(data.y[hold], data.X[hold], data.group_sizes)
        pilot = pilot_fit(train_data, tau, controls)
        weights = compute_weights(pilot, schedule.gamma)
        for k, kappa in enumerate(grid):
            mu1, mu2 = schedule.with_kappa(kappa).mu(train_data.n)
            cfg = FitConfig(tau, mu1, mu2, schedule.gamma,
                            controls if controls is not None else FitConfig().solver)
            res = fit(train_data, weights, cfg)
            errors[k] += quantile_process(res.coefficients, test_data, tau)
    best = int(np.argmin(errors))
    return schedule.with_kappa(grid[best]), errors
