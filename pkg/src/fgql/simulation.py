"""Scenario generation and Monte Carlo studies of the estimator's large-sample behaviour.

Every study is a pure function of the scenario, the tuning schedule, the
sample sizes, the replication count and the scenario seed.  Replication
``k`` at sample size ``n`` draws from
``SeedSequence(seed, spawn_key=(n, k))``, so replications can run in any
order (or in parallel) without changing the aggregate report.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Sequence

import numpy as np
from scipy import stats

from .model import FitConfig, GroupedCoefficients, GroupedDesign, SolverControls
from .solver import fit_adaptive
from .weights import TuningSchedule

log = logging.getLogger(__name__)

DEFAULT_NS = (200, 400, 800)
THREADS_ENV = "FGQL_THREADS"


@dataclass(frozen=True)
class ErrorDistribution:
    """Error law shifted so that its ``tau``-quantile is exactly zero.

    ``family`` is one of ``normal``, ``student_t``, ``laplace``, ``custom``
    (``params["dist"]`` is a frozen continuous scipy distribution) or
    ``none`` (degenerate at zero).
    """

    family: str = "normal"
    params: dict = field(default_factory=dict)
    tau: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise ValueError(f"tau must lie strictly between 0 and 1, got {self.tau}")
        if self.family not in ("normal", "student_t", "laplace", "custom", "none"):
            raise ValueError(f"unknown error family {self.family!r}")
        if self.family == "student_t" and self.params.get("df", 0) <= 0:
            raise ValueError("student_t errors need a positive 'df'")
        if self.family == "custom" and "dist" not in self.params:
            raise ValueError("custom errors need a frozen scipy distribution in 'dist'")
        if self.family != "none" and self.scale <= 0:
            raise ValueError("scale must be positive")

    @property
    def scale(self) -> float:
        return float(self.params.get("scale", 1.0))

    def base(self):
        """Unshifted frozen scipy distribution."""
        if self.family == "normal":
            return stats.norm(0.0, self.scale)
        if self.family == "student_t":
            return stats.t(self.params["df"], 0.0, self.scale)
        if self.family == "laplace":
            return stats.laplace(0.0, self.scale)
        if self.family == "custom":
            return self.params["dist"]
        return None

    @property
    def tau_shift(self) -> float:
        """Amount subtracted from raw draws: the ``tau``-quantile of the base law."""
        if self.family == "none":
            return 0.0
        return float(self.base().ppf(self.tau))

    @property
    def density_at_zero(self) -> float:
        if self.family == "none":
            return math.inf
        return float(self.base().pdf(self.tau_shift))

    def cdf(self, x):
        if self.family == "none":
            return np.where(np.asarray(x) >= 0, 1.0, 0.0)
        return self.base().cdf(np.asarray(x) + self.tau_shift)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.family == "none":
            return np.zeros(size)
        if self.family == "normal":
            raw = rng.normal(0.0, self.scale, size)
        elif self.family == "student_t":
            raw = self.scale * rng.standard_t(self.params["df"], size)
        elif self.family == "laplace":
            raw = rng.laplace(0.0, self.scale, size)
        else:
            raw = np.asarray(self.params["dist"].rvs(size=size, random_state=rng), float)
        return raw - self.tau_shift

    def describe(self) -> dict:
        params = {k: v for k, v in self.params.items() if k != "dist"}
        return {"family": self.family, "params": params, "tau": self.tau,
                "tau_shift": self.tau_shift, "density_at_zero": self.density_at_zero}


@dataclass(frozen=True)
class SimulationScenario:
    """Truth and data-generating process for one study.

    ``true_beta`` lists the leading groups of the true coefficient vector.
    With ``growth_c`` set, the number of groups at sample size ``n`` is
    ``floor(n**growth_c)`` and zero groups of size ``pad_group_size`` are
    appended after ``true_beta``.  Rows of ``X`` are i.i.d. normal with
    covariance ``design_cov`` (identity by default).
    """

    true_beta: GroupedCoefficients
    n: int
    error: ErrorDistribution = field(default_factory=ErrorDistribution)
    seed: int = 0
    growth_c: float | None = None
    pad_group_size: int | None = None
    alpha: float = 0.0
    design_cov: np.ndarray | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be positive")
        if self.growth_c is not None and not 0 <= self.growth_c < 1:
            raise ValueError("growth exponent c must lie in [0, 1)")

    @property
    def tau(self) -> float:
        return self.error.tau

    def at(self, n: int) -> "SimulationScenario":
        return replace(self, n=int(n))

    def p_at(self, n: int | None = None) -> int:
        n = self.n if n is None else n
        if self.growth_c is None:
            return self.true_beta.p
        p = int(math.floor(n ** self.growth_c + 1e-9))
        return max(p, self.true_beta.p)

    def beta_at(self, n: int | None = None) -> GroupedCoefficients:
        p = self.p_at(n)
        extra = p - self.true_beta.p
        if extra == 0:
            return self.true_beta
        d = self.pad_group_size or self.true_beta.group_sizes[-1]
        return GroupedCoefficients(
            np.concatenate([self.true_beta.values, np.zeros(extra * d)]),
            self.true_beta.group_sizes + (d,) * extra)

    @property
    def beta(self) -> GroupedCoefficients:
        return self.beta_at(self.n)

    @property
    def active_set(self) -> tuple[int, ...]:
        """0-based indices of groups with nonzero true norm."""
        return tuple(int(j) for j in np.flatnonzero(self.beta.norms() > 0))

    @property
    def fused_truth(self) -> tuple[int, ...]:
        """Groups ``j`` equal to group ``j - 1`` with both nonzero (the designated fusions)."""
        coef = self.beta
        out = []
        for j in range(1, coef.p):
            a, b = coef.group(j), coef.group(j - 1)
            if a.size == b.size and np.array_equal(a, b) and np.any(a):
                out.append(j)
        return tuple(out)

    @property
    def h0(self) -> float:
        norms = self.beta.norms()
        active = norms[norms > 0]
        return float(active.min()) if active.size else 0.0

    def check_feasible(self) -> None:
        r = sum(self.beta.group_sizes)
        if r >= self.n:
            raise ValueError(f"infeasible scenario: r = {r} >= n = {self.n}")


def replication_rng(seed: int, n: int, replication: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(int(n), int(replication))))


def generate(scenario: SimulationScenario, replication: int = 0) -> GroupedDesign:
    """Draw ``(y, X)`` for one replication; deterministic in ``(seed, n, replication)``."""
    if replication < 0:
        raise ValueError("replication must be nonnegative")
    scenario.check_feasible()
    beta = scenario.beta
    r = beta.values.size
    rng = replication_rng(scenario.seed, scenario.n, replication)
    X = rng.standard_normal((scenario.n, r))
    if scenario.design_cov is not None:
        X = X @ np.linalg.cholesky(np.asarray(scenario.design_cov, float)).T
    eps = scenario.error.sample(rng, scenario.n)
    return GroupedDesign(X @ beta.values + eps, X, beta.group_sizes)


@dataclass(frozen=True)
class AuditRecord:
    n: int
    p: int
    r: int
    lambda_min: float
    lambda_max: float
    design_statistic: float
    signal_floor: float
    verdicts: dict

    def to_dict(self) -> dict:
        return asdict(self)


def audit_assumptions(scenario: SimulationScenario, data: GroupedDesign,
                      min_eigenvalue: float = 0.1, max_eigenvalue: float = 10.0,
                      design_limit: float = 1.0, signal_limit: float = 0.0) -> AuditRecord:
    """Finite-sample stand-ins for the eigenvalue, leverage and signal conditions.

    ``design_statistic`` is ``sqrt(p/n) * max_i ||x_i||`` (should be small);
    ``signal_floor`` is ``n**-alpha * h0`` (should stay above ``signal_limit``).
    """
    gram = data.X.T @ data.X / data.n
    eig = np.linalg.eigvalsh(gram)
    lam_min, lam_max = float(eig[0]), float(eig[-1])
    stat = math.sqrt(data.p / data.n) * float(np.max(np.linalg.norm(data.X, axis=1)))
    floor = data.n ** (-scenario.alpha) * scenario.h0
    verdicts = {
        "eigenvalues": "pass" if min_eigenvalue <= lam_min and lam_max <= max_eigenvalue else "warn",
        "design": "pass" if stat < design_limit else "warn",
        "signal": "pass" if floor > signal_limit else "warn",
        "dimension": "pass" if data.r < data.n else "warn",
    }
    return AuditRecord(data.n, data.p, data.r, lam_min, lam_max, stat, floor, verdicts)


def asymptotic_covariance(data: GroupedDesign, active: Sequence[int], tau: float,
                          f0: float) -> np.ndarray:
    """``tau (1 - tau) / f0**2`` times the inverse empirical Gram matrix of the active columns."""
    if len(active) == 0:
        raise ValueError("active set must be nonempty")
    if not f0 > 0:
        raise ValueError("density at zero must be positive")
    cols = data.columns_of(active)
    XA = data.X[:, cols]
    gram = XA.T @ XA / data.n
    if np.linalg.cond(gram) > 1e12:
        raise np.linalg.LinAlgError("restricted Gram matrix is singular")
    return tau * (1.0 - tau) / f0 ** 2 * np.linalg.inv(gram)


@dataclass(frozen=True)
class ReplicationOutcome:
    n: int
    replication: int
    ok: bool
    message: str = ""
    selected: tuple = ()
    exact_selection: bool = False
    fused: bool = False
    error_norm: float = math.nan
    projection: float = math.nan
    target_variance: float = math.nan
    covered: bool = False
    converged: bool = False
    pilot_converged: bool = False


def _replicate(task) -> ReplicationOutcome:
    scenario, schedule, n, k, controls, direction = task
    sc = scenario.at(n)
    try:
        data = generate(sc, k)
        mu1, mu2 = schedule.mu(n)
        config = FitConfig(sc.tau, mu1, mu2, schedule.gamma, controls)
        result, pilot, _ = fit_adaptive(data, config)
    except Exception as exc:  # counted in the report, never dropped
        return ReplicationOutcome(n, k, False, f"{type(exc).__name__}: {exc}")
    truth = sc.beta
    active = sc.active_set
    selected = result.active_groups
    fused = all(j in result.fused_pairs for j in sc.fused_truth)
    error_norm = float(np.linalg.norm(result.beta - truth.values))

    projection = target = math.nan
    covered = False
    f0 = sc.error.density_at_zero
    if active and math.isfinite(f0):
        cols = data.columns_of(active)
        u = np.zeros(cols.size) if direction is None else np.asarray(direction, float)
        if direction is None:
            u[0] = 1.0
        u = u / np.linalg.norm(u)
        dev = u @ (result.beta[cols] - truth.values[cols])
        projection = math.sqrt(n) * dev
        try:
            cov = asymptotic_covariance(data, active, sc.tau, f0)
            target = float(u @ cov @ u)
            half = stats.norm.ppf(0.975) * math.sqrt(target / n)
            covered = abs(dev) <= half
        except np.linalg.LinAlgError:
            pass
    return ReplicationOutcome(
        n, k, True, "", tuple(selected), tuple(selected) == tuple(active), fused,
        error_norm, projection, target, covered, result.converged, pilot.converged)


def _workers() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def run_replications(scenario: SimulationScenario, schedule: TuningSchedule,
                     ns: Sequence[int] = DEFAULT_NS, replications: int = 200,
                     controls: SolverControls | None = None,
                     direction=None) -> list[ReplicationOutcome]:
    """All per-replication outcomes, sorted by ``(n, replication)``."""
    if replications < 1:
        raise ValueError("replications must be at least 1")
    controls = controls or SolverControls()
    for n in ns:
        scenario.at(n).check_feasible()
    tasks = [(scenario, schedule, int(n), k, controls, direction)
             for n in ns for k in range(replications)]
    workers = _workers()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_replicate, tasks, chunksize=4))
    else:
        outcomes = [_replicate(t) for t in tasks]
    return sorted(outcomes, key=lambda o: (o.n, o.replication))


@dataclass
class StudyReport:
    """Aggregates per sample size; lists are aligned with ``ns``."""

    kind: str
    ns: list
    replications: int
    seed: int
    p: list
    mu: list
    failures: list
    nonconverged: list
    selection_rate: list = field(default_factory=list)
    fusion_rate: list = field(default_factory=list)
    median_error: list = field(default_factory=list)
    scaled_error: list = field(default_factory=list)
    rate_ratio: float | None = None
    empirical_variance: list = field(default_factory=list)
    theoretical_variance: list = field(default_factory=list)
    variance_ratio: list = field(default_factory=list)
    coverage: list = field(default_factory=list)
    scenario: dict = field(default_factory=dict)
    schedule: dict = field(default_factory=dict)
    failure_messages: list = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def _base_report(kind, scenario, schedule, ns, replications, outcomes) -> StudyReport:
    report = StudyReport(
        kind=kind, ns=[int(n) for n in ns], replications=replications, seed=scenario.seed,
        p=[scenario.p_at(n) for n in ns], mu=[list(schedule.mu(n)) for n in ns],
        failures=[], nonconverged=[],
        scenario=describe_scenario(scenario), schedule=asdict(schedule))
    for n in ns:
        group = _at(outcomes, n)
        report.failures.append(sum(not o.ok for o in group))
        report.nonconverged.append(sum(o.ok and not o.converged for o in group))
        report.failure_messages.extend(f"n={o.n} rep={o.replication}: {o.message}"
                                       for o in group if not o.ok)
    return report


def _at(outcomes, n):
    # canonical order makes every floating-point aggregate independent of task order
    return sorted((o for o in outcomes if o.n == n), key=lambda o: o.replication)


def _ok(outcomes, n):
    return [o for o in _at(outcomes, n) if o.ok]


def _mean(values) -> float:
    return float(np.mean(values)) if len(values) else math.nan


def describe_scenario(scenario: SimulationScenario) -> dict:
    return {
        "true_beta": scenario.true_beta.values.tolist(),
        "group_sizes": list(scenario.true_beta.group_sizes),
        "n": scenario.n, "seed": scenario.seed, "tau": scenario.tau,
        "error": scenario.error.describe(),
        "growth_c": scenario.growth_c, "pad_group_size": scenario.pad_group_size,
        "alpha": scenario.alpha,
        "active_set": [j + 1 for j in scenario.active_set],
        "fused_truth": [j + 1 for j in scenario.fused_truth],
    }


def selection_report(scenario, schedule, ns, replications, outcomes) -> StudyReport:
    report = _base_report("selection", scenario, schedule, ns, replications, outcomes)
    for n in ns:
        group = _ok(outcomes, n)
        report.selection_rate.append(_mean([o.exact_selection for o in group]))
        report.fusion_rate.append(_mean([o.fused for o in group]))
    return report


def normality_report(scenario, schedule, ns, replications, outcomes) -> StudyReport:
    report = _base_report("normality", scenario, schedule, ns, replications, outcomes)
    for n in ns:
        group = [o for o in _ok(outcomes, n) if math.isfinite(o.projection)]
        proj = np.array([o.projection for o in group])
        emp = float(np.var(proj, ddof=1)) if proj.size > 1 else math.nan
        theo = _mean([o.target_variance for o in group])
        report.empirical_variance.append(emp)
        report.theoretical_variance.append(theo)
        report.variance_ratio.append(emp / theo if theo and math.isfinite(theo) else math.nan)
        report.coverage.append(_mean([o.covered for o in group]))
    return report


def rate_report(scenario, schedule, ns, replications, outcomes) -> StudyReport:
    report = _base_report("rate", scenario, schedule, ns, replications, outcomes)
    for n in ns:
        group = _ok(outcomes, n)
        errors = np.array([o.error_norm for o in group])
        med = float(np.median(errors)) if errors.size else math.nan
        report.median_error.append(med)
        report.scaled_error.append(med / math.sqrt(scenario.p_at(n) / n))
    first, last = report.scaled_error[0], report.scaled_error[-1]
    report.rate_ratio = last / first if first > 0 else (0.0 if last == 0 else math.inf)
    return report


def run_selection_study(scenario, schedule, replications=200, ns=DEFAULT_NS,
                        controls=None) -> StudyReport:
    """Exact recovery rate of the active group set and of the designated fusions."""
    outcomes = run_replications(scenario, schedule, ns, replications, controls)
    return selection_report(scenario, schedule, ns, replications, outcomes)


def run_normality_study(scenario, schedule, replications=200, ns=DEFAULT_NS,
                        controls=None, direction=None) -> StudyReport:
    """Spread of ``sqrt(n) u'(beta_hat - beta0)_A`` against its limiting variance.

    ``direction`` defaults to the first active coordinate.
    """
    outcomes = run_replications(scenario, schedule, ns, replications, controls, direction)
    return normality_report(scenario, schedule, ns, replications, outcomes)


def run_rate_study(scenario, schedule, replications=100, ns=(400, 1600),
                   controls=None) -> StudyReport:
    """Median ``||beta_hat - beta0|| / sqrt(p/n)`` per n and its last/first ratio."""
    outcomes = run_replications(scenario, schedule, ns, replications, controls)
    return rate_report(scenario, schedule, ns, replications, outcomes)


def acceptance_scenario(n: int = 800, seed: int = 2026) -> SimulationScenario:
    """Six groups of three; groups 1 and 2 equal to (1, 1, 1); standard normal median model."""
    beta = GroupedCoefficients.from_groups([[1, 1, 1], [1, 1, 1]] + [[0, 0, 0]] * 4)
    return SimulationScenario(beta, n, ErrorDistribution("normal", {}, 0.5), seed)


def growth_scenario(n: int = 400, seed: int = 2026, c: float = 0.4) -> SimulationScenario:
    """Two active groups of three followed by ``floor(n**c) - 2`` zero groups."""
    beta = GroupedCoefficients.from_groups([[1, 1, 1], [1, 1, 1]])
    return SimulationScenario(beta, n, ErrorDistribution("normal", {}, 0.5), seed,
                              growth_c=c, pad_group_size=3, alpha=0.0)
