"""Grouped linear quantile model: data containers, check loss and objectives.

The model is ``y_i = sum_j X_ij' beta_j + eps_i`` with the columns of ``X``
split into ``p`` contiguous, ordered groups.  Group ``j`` is fused with group
``j - 1``, so the order of the groups matters.

No intercept is fitted.  Center ``y`` or add a constant column (which is then
penalized like any other group).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


def _as_sizes(group_sizes) -> tuple[int, ...]:
    sizes = tuple(int(d) for d in np.atleast_1d(group_sizes))
    if len(sizes) == 0:
        raise ValueError("at least one group is required")
    if any(d < 1 for d in sizes):
        raise ValueError(f"group sizes must be positive, got {sizes}")
    return sizes


def group_starts(group_sizes: Sequence[int]) -> np.ndarray:
    """Index of the first column of every group."""
    return np.concatenate(([0], np.cumsum(group_sizes)[:-1])).astype(int)


def group_slices(group_sizes: Sequence[int]) -> list[slice]:
    bounds = np.concatenate(([0], np.cumsum(group_sizes))).astype(int)
    return [slice(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]


@dataclass(frozen=True)
class GroupedDesign:
    """Response ``y``, design ``X`` (rows are observations) and the column partition."""

    y: np.ndarray
    X: np.ndarray
    group_sizes: tuple[int, ...]

    def __post_init__(self):
        y = np.ascontiguousarray(self.y, dtype=float).reshape(-1)
        X = np.ascontiguousarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.ndim != 2:
            raise ValueError("X must be a 2-d array")
        sizes = _as_sizes(self.group_sizes)
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
        if y.shape[0] < 1:
            raise ValueError("need at least one observation")
        if sum(sizes) != X.shape[1]:
            raise ValueError(
                f"group sizes sum to {sum(sizes)} but X has {X.shape[1]} columns")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("X and y must be finite")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "group_sizes", sizes)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def r(self) -> int:
        return self.X.shape[1]

    @property
    def p(self) -> int:
        return len(self.group_sizes)

    @property
    def slices(self) -> list[slice]:
        return group_slices(self.group_sizes)

    def columns_of(self, groups: Sequence[int]) -> np.ndarray:
        """Column indices belonging to ``groups`` (0-based group indices)."""
        sl = self.slices
        idx = [np.arange(sl[j].start, sl[j].stop) for j in sorted(groups)]
        return np.concatenate(idx) if idx else np.zeros(0, dtype=int)


@dataclass(frozen=True)
class GroupedCoefficients:
    """Coefficient vector of length ``r`` together with its group partition."""

    values: np.ndarray
    group_sizes: tuple[int, ...]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).reshape(-1)
        sizes = _as_sizes(self.group_sizes)
        if values.shape[0] != sum(sizes):
            raise ValueError(
                f"{values.shape[0]} coefficients for groups of total size {sum(sizes)}")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "group_sizes", sizes)

    @classmethod
    def zeros(cls, group_sizes) -> "GroupedCoefficients":
        sizes = _as_sizes(group_sizes)
        return cls(np.zeros(sum(sizes)), sizes)

    @classmethod
    def from_groups(cls, groups: Sequence[Sequence[float]]) -> "GroupedCoefficients":
        arrays = [np.atleast_1d(np.asarray(g, dtype=float)) for g in groups]
        return cls(np.concatenate(arrays), tuple(a.size for a in arrays))

    @property
    def p(self) -> int:
        return len(self.group_sizes)

    def group(self, j: int) -> np.ndarray:
        return self.values[group_slices(self.group_sizes)[j]]

    def groups(self) -> list[np.ndarray]:
        return [self.values[s] for s in group_slices(self.group_sizes)]

    def difference(self, j: int) -> np.ndarray:
        """``beta_j - beta_{j-1}`` for ``j >= 1``; shorter groups are zero-padded."""
        if not 1 <= j < self.p:
            raise IndexError(f"difference needs 1 <= j < {self.p}, got {j}")
        a, b = self.group(j), self.group(j - 1)
        d = max(a.size, b.size)
        out = np.zeros(d)
        out[:a.size] += a
        out[:b.size] -= b
        return out

    def norms(self) -> np.ndarray:
        return np.array([np.linalg.norm(g) for g in self.groups()])

    def difference_norms(self) -> np.ndarray:
        return np.array([np.linalg.norm(self.difference(j)) for j in range(1, self.p)])

    def matches(self, data: GroupedDesign) -> bool:
        return self.group_sizes == data.group_sizes


@dataclass(frozen=True)
class SolverControls:
    """Stopping rules and splitting parameters of the ADMM solver.

    ``zero_threshold`` is relative: a group whose norm is at most
    ``zero_threshold`` times the largest group norm is set exactly to zero.
    """

    penalty_parameter: float = 1.0
    abs_tol: float = 1e-7
    rel_tol: float = 1e-5
    max_iterations: int = 10_000
    zero_threshold: float = 1e-6
    adapt_interval: int = 10
    adapt_until: int = 200
    relaxation: float = 1.0

    def __post_init__(self):
        for name in ("penalty_parameter", "abs_tol", "rel_tol", "zero_threshold"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be a positive finite number, got {value}")
        if self.abs_tol > 1 or self.rel_tol > 1:
            raise ValueError("abs_tol and rel_tol must not exceed 1")
        if int(self.max_iterations) < 1:
            raise ValueError("max_iterations must be a positive integer")
        if not 0.0 < self.relaxation < 2.0:
            raise ValueError("relaxation must lie in (0, 2)")
        if self.adapt_interval < 1 or self.adapt_until < 0:
            raise ValueError("invalid penalty adaptation schedule")


@dataclass(frozen=True)
class FitConfig:
    tau: float = 0.5
    mu1: float = 0.0
    mu2: float = 0.0
    gamma: float = 1.0
    solver: SolverControls = field(default_factory=SolverControls)

    def __post_init__(self):
        _check_tau(self.tau)
        if not (math.isfinite(self.gamma) and self.gamma > 0):
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        for name in ("mu1", "mu2"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ValueError(f"{name} must be a nonnegative finite number, got {value}")


def _check_tau(tau: float) -> None:
    if not (isinstance(tau, (int, float, np.floating)) and 0.0 < float(tau) < 1.0):
        raise ValueError(f"tau must lie strictly between 0 and 1, got {tau!r}")


def check_loss(u, tau: float):
    """Quantile check loss ``rho_tau(u) = u * (tau - 1{u < 0})``.

    Works elementwise on arrays; returns a float for scalar input.
    """
    _check_tau(tau)
    u_arr = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(u_arr)):
        raise ValueError("check_loss requires finite input")
    out = np.where(u_arr < 0, u_arr * (tau - 1.0), u_arr * tau)
    return float(out) if out.ndim == 0 else out


def _coefficient_values(beta, data: GroupedDesign) -> np.ndarray:
    if isinstance(beta, GroupedCoefficients):
        if not beta.matches(data):
            raise ValueError(
                f"coefficient partition {beta.group_sizes} does not match "
                f"design partition {data.group_sizes}")
        return beta.values
    values = np.asarray(beta, dtype=float).reshape(-1)
    if values.shape[0] != data.r:
        raise ValueError(f"expected {data.r} coefficients, got {values.shape[0]}")
    return values


def quantile_process(beta, data: GroupedDesign, tau: float) -> float:
    """Sum of check losses of the residuals ``y - X beta`` (compensated summation)."""
    values = _coefficient_values(beta, data)
    residuals = data.y - data.X @ values
    return math.fsum(check_loss(residuals, tau))


def penalty_terms(values: np.ndarray, group_sizes, w1, w2) -> tuple[float, float]:
    """Weighted group-norm sum and weighted fused-difference sum."""
    coef = GroupedCoefficients(values, group_sizes)
    w1 = np.asarray(w1, dtype=float)
    w2 = np.asarray(w2, dtype=float)
    if w1.shape != (coef.p,) or w2.shape != (coef.p - 1,):
        raise ValueError(
            f"weights of shape {w1.shape}/{w2.shape} for {coef.p} groups")
    if np.any(w1 < 0) or np.any(w2 < 0):
        raise ValueError("weights must be nonnegative")
    group_part = math.fsum(w1 * coef.norms())
    fused_part = math.fsum(w2 * coef.difference_norms()) if coef.p > 1 else 0.0
    return group_part, fused_part


def penalized_objective(beta, data: GroupedDesign, weights, config: FitConfig) -> float:
    """Quantile process plus the adaptive group and fused penalties.

    ``weights`` is any object with ``w1`` (length p) and ``w2`` (length p-1).
    """
    values = _coefficient_values(beta, data)
    loss = quantile_process(values, data, config.tau)
    group_part, fused_part = penalty_terms(values, data.group_sizes, weights.w1, weights.w2)
    return math.fsum([loss, config.mu1 * group_part, config.mu2 * fused_part])
