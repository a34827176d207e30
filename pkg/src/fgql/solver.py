"""ADMM solver for the adaptive fused group LASSO quantile objective.

The objective is split with three copies of the unknowns,

    z = y - X beta        (check loss, prox_check)
    g = beta              (group norms, block soft thresholding)
    h = D beta            (successive group differences, block soft thresholding)

so that every nonsmooth term has an exact proximal map and the beta-update
is one linear solve with the fixed matrix ``X'X + s**2 (I + D'D)``.  The
copies ``g`` and ``h`` are carried scaled by ``s = sqrt(trace(X'X) / r)``,
so all three constraint blocks live on the scale of the data and one
penalty parameter suits them all.  The matrix does not depend on that
parameter and is factorized once per fit.

Reported coefficients are taken from the ``g`` copy, whose block soft
thresholding produces exact zeros, so the selected group set is crisp.
Once the zero and fusion pattern is fixed, a short Newton finish on the
restricted problem removes the last digits of ADMM inaccuracy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .model import (
    FitConfig,
    GroupedCoefficients,
    GroupedDesign,
    SolverControls,
    group_slices,
    group_starts,
    penalized_objective,
    quantile_process,
)
from ._kernels import admm_chunk, objective
from .weights import DEFAULT_CAP, AdaptiveWeights, compute_weights


class FactorizationError(np.linalg.LinAlgError):
    """The splitting system matrix is numerically singular."""

    def __init__(self, message: str, smallest_pivot: float):
        super().__init__(message)
        self.smallest_pivot = smallest_pivot


def difference_operator(group_sizes) -> tuple[np.ndarray, np.ndarray]:
    """Matrix ``D`` stacking ``beta_j - beta_{j-1}`` for successive groups.

    Groups of unequal size are compared after zero-padding the shorter one.
    Returns ``D`` and the block size of every difference.
    """
    sizes = np.asarray(group_sizes, dtype=int)
    starts = group_starts(sizes)
    r = int(sizes.sum())
    blocks = [max(sizes[j - 1], sizes[j]) for j in range(1, len(sizes))]
    D = np.zeros((int(sum(blocks)), r))
    row = 0
    for j, width in zip(range(1, len(sizes)), blocks):
        for k in range(width):
            if k < sizes[j]:
                D[row + k, starts[j] + k] = 1.0
            if k < sizes[j - 1]:
                D[row + k, starts[j - 1] + k] = -1.0
        row += width
    return D, np.asarray(blocks, dtype=int)


class SplitSystem:
    """Problem data shared by all iterations of one fit, including the cached factor."""

    def __init__(self, data: GroupedDesign, block_scale: float = 1.0):
        self.data = data
        self.X = data.X
        self.y = data.y
        self.sizes = np.asarray(data.group_sizes, dtype=int)
        self.starts = group_starts(self.sizes)
        self.D, self.diff_sizes = difference_operator(data.group_sizes)
        self.diff_starts = (group_starts(self.diff_sizes) if self.diff_sizes.size
                            else np.zeros(0, dtype=int))
        self.Xt = np.ascontiguousarray(self.X.T)
        self.Dt = np.ascontiguousarray(self.D.T)
        self.block_scale = float(block_scale)
        A = self.X.T @ self.X + self.block_scale ** 2 * (np.eye(data.r) + self.D.T @ self.D)
        try:
            self.factor = scipy.linalg.cho_factor(A, lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            pivot = float(np.min(np.linalg.eigvalsh(A)))
            raise FactorizationError(
                f"system matrix is not positive definite (smallest pivot {pivot:.3e})",
                pivot) from None
        pivots = np.abs(np.diag(self.factor[0])) ** 2
        if pivots.min() <= np.finfo(float).eps * pivots.max():
            raise FactorizationError(
                f"system matrix is numerically singular (smallest pivot {pivots.min():.3e})",
                float(pivots.min()))
        self.L = np.ascontiguousarray(np.tril(self.factor[0]))

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return scipy.linalg.cho_solve(self.factor, rhs, check_finite=False)


@dataclass
class SplitState:
    """Iterate of the splitting: primal ``beta``, the three copies and their scaled duals.

    The group and difference copies are stored multiplied by the system's
    ``block_scale``.
    """

    beta: np.ndarray
    residual_block: np.ndarray
    group_block: np.ndarray
    diff_block: np.ndarray
    dual_residual: np.ndarray
    dual_group: np.ndarray
    dual_diff: np.ndarray
    rho: float = 1.0
    iteration: int = 0

    @classmethod
    def initial(cls, system: SplitSystem, rho: float) -> "SplitState":
        r, m = system.data.r, system.D.shape[0]
        return cls(np.zeros(r), system.y.copy(), np.zeros(r), np.zeros(m),
                   np.zeros(system.data.n), np.zeros(r), np.zeros(m), rho, 0)

    def rescale_duals(self, factor: float) -> None:
        self.dual_residual *= factor
        self.dual_group *= factor
        self.dual_diff *= factor


def beta_update(state: SplitState, system: SplitSystem) -> np.ndarray:
    """Exact minimizer over beta of the augmented Lagrangian at fixed copies and duals.

    Mirrors the update inside the compiled loop; exposed for inspection and tests.
    """
    s = system.block_scale
    rhs = (system.X.T @ (system.y - state.residual_block - state.dual_residual)
           + s * (state.group_block - state.dual_group)
           + s * (system.D.T @ (state.diff_block - state.dual_diff)))
    return system.solve(rhs)


@dataclass(frozen=True)
class FitResult:
    coefficients: GroupedCoefficients
    active_groups: tuple[int, ...]
    fused_pairs: tuple[int, ...]
    objective_value: float
    iterations: int
    converged: bool
    primal_history: np.ndarray = field(repr=False)
    dual_history: np.ndarray = field(repr=False)
    penalty_parameter: float = 1.0

    @property
    def beta(self) -> np.ndarray:
        return self.coefficients.values


def select_active_groups(result) -> tuple[int, ...]:
    """Indices (0-based) of groups with a nonzero coefficient norm."""
    coef = getattr(result, "coefficients", result)
    return tuple(int(j) for j in np.flatnonzero(coef.norms() > 0))


def _equal_padded(a: np.ndarray, b: np.ndarray) -> bool:
    d = max(a.size, b.size)
    pa, pb = np.zeros(d), np.zeros(d)
    pa[:a.size], pb[:b.size] = a, b
    return bool(np.array_equal(pa, pb))


def fused_pairs_of(coef: GroupedCoefficients) -> tuple[int, ...]:
    """Groups ``j`` (0-based, ``j >= 1``) exactly equal to group ``j - 1``."""
    groups = coef.groups()
    return tuple(j for j in range(1, coef.p) if _equal_padded(groups[j], groups[j - 1]))


def _postprocess(values: np.ndarray, diff_block: np.ndarray, system: SplitSystem,
                 zero_threshold: float) -> np.ndarray:
    """Relative group zeroing, then averaging of every run of fused groups."""
    coef = values.copy()
    slices = system.data.slices
    norms = np.array([np.linalg.norm(coef[s]) for s in slices])
    top = norms.max()
    if top > 0:
        for j in np.flatnonzero(norms <= zero_threshold * top):
            coef[slices[j]] = 0.0

    # a pair is fused when its difference copy is exactly zero
    p = system.data.p
    linked = [False] * p
    for k in range(p - 1):
        start, width = system.diff_starts[k], system.diff_sizes[k]
        linked[k + 1] = not np.any(diff_block[start:start + width])
    j = 0
    while j < p:
        end = j + 1
        while end < p and linked[end]:
            end += 1
        if end - j > 1:
            run = range(j, end)
            width = max(system.sizes[i] for i in run)
            stack = np.zeros((end - j, width))
            for row, i in enumerate(run):
                stack[row, :system.sizes[i]] = coef[slices[i]]
            if np.any(~stack.any(axis=1)):
                common = np.zeros(width)
            else:
                common = stack.mean(axis=0)
            for i in run:
                coef[slices[i]] = common[:system.sizes[i]]
            # components past the narrowest group must vanish for padded equality
            narrow = min(system.sizes[i] for i in run)
            for i in run:
                coef[slices[i]][narrow:] = 0.0
        j = end
    return coef


_CHUNK = 50


def _run_admm(system: SplitSystem, tau: float, t_group: np.ndarray, t_diff: np.ndarray,
              controls: SolverControls, report_group_block: bool, on_chunk=None):
    """Iterate until the residual stopping rule holds or the budget runs out.

    A non-converged run returns its best periodically scored iterate.
    ``on_chunk(state)`` is called between chunks of iterations; a non-None
    return value (coefficients) ends the run as converged.
    """
    r, m = system.data.r, system.D.shape[0]
    state = SplitState.initial(system, controls.penalty_parameter)
    max_it = int(controls.max_iterations)
    primal_hist = np.zeros(max_it)
    dual_hist = np.zeros(max_it)
    scalars = np.array([controls.penalty_parameter, 0.0, 0.0, np.inf])
    best = np.zeros(r)
    best_h = np.zeros(m)
    t_group = np.ascontiguousarray(t_group, dtype=float)
    t_diff = np.ascontiguousarray(t_diff, dtype=float)
    args = (system.X, system.Xt, system.y, system.D, system.Dt, system.L,
            system.starts, system.sizes, system.diff_starts, system.diff_sizes,
            t_group, t_diff, float(tau),
            state.beta, state.residual_block, state.group_block, state.diff_block,
            state.dual_residual, state.dual_group, state.dual_diff)
    early = None
    while True:
        admm_chunk(*args, scalars, primal_hist, dual_hist, _CHUNK,
                   controls.abs_tol, controls.rel_tol, max_it,
                   int(controls.adapt_interval), int(controls.adapt_until),
                   controls.relaxation, report_group_block, best, best_h,
                   system.block_scale)
        state.rho, state.iteration = float(scalars[0]), int(scalars[1])
        converged = bool(scalars[2])
        if on_chunk is not None and not converged:
            early = on_chunk(state)
            if early is not None:
                converged = True
                break
        if converged or state.iteration >= max_it:
            break

    k = state.iteration
    hist = (primal_hist[:k].copy(), dual_hist[:k].copy())
    if early is not None:
        return (early, state.diff_block / system.block_scale), state, True, hist
    sc = system.block_scale
    values = state.group_block / sc if report_group_block else state.beta.copy()
    final = (values, state.diff_block / sc)
    if not converged and np.isfinite(scalars[3]):
        score = objective(values, system.X, system.y, system.D, float(tau), t_group, t_diff,
                          system.starts, system.sizes, system.diff_starts, system.diff_sizes)
        if scalars[3] < score:
            final = (best.copy(), best_h.copy())
    return final, state, converged, hist


def _edge_check(data: GroupedDesign, basis: np.ndarray, tau: float):
    """Vertex through ``basis`` and its multipliers; None if the basis is ill-conditioned."""
    Xh = data.X[basis]
    if np.linalg.cond(Xh) > 1e10:
        return None
    vertex = np.linalg.solve(Xh, data.y[basis])
    others = np.ones(data.n, bool)
    others[basis] = False
    res = data.y - data.X @ vertex
    psi = np.where(res[others] < 0, tau - 1.0, tau)
    mult = np.linalg.solve(Xh.T, -(data.X[others].T @ psi))
    return Xh, vertex, res, others, mult


def simplex_refine(data: GroupedDesign, beta: np.ndarray, tau: float, max_pivots: int):
    """Exact finish for the unpenalized problem, started from an approximate minimizer.

    Takes the basic solution through the ``r`` observations with the smallest
    residuals at ``beta`` and performs simplex pivots (leave the basis point
    with the most violated multiplier, exact line search over the breakpoints)
    until the vertex is certified optimal.  Returns ``(vertex, certified)``;
    ``vertex`` is None when no well-conditioned basis is available.  Every
    pivot lowers (or keeps) the loss, so ``vertex`` is the best vertex seen.
    """
    tol = 1e-12 * (np.abs(data.y).max() + 1.0)
    slack = 1e-9
    basis = np.argsort(np.abs(data.y - data.X @ beta), kind="stable")[:data.r].copy()
    vertex = None
    for pivot in range(max_pivots + 1):
        step = _edge_check(data, basis, tau)
        if step is None:
            return vertex, False
        Xh, vertex, res, others, mult = step
        r_other = res[others]
        degenerate = bool(np.any(np.abs(r_other) <= tol))
        low, high = (tau - 1.0) - mult, mult - tau
        viol = np.maximum(low, high)
        k = int(np.argmax(viol))
        if viol[k] <= slack:
            # multipliers feasible; a tie off the basis makes the test inconclusive
            return vertex, not degenerate
        if pivot == max_pivots:
            break
        s = 1.0 if low[k] > high[k] else -1.0
        e = np.zeros(data.r)
        e[k] = s
        d = np.linalg.solve(Xh, e)
        g = data.X[others] @ d
        # residual of point k becomes -t*s; other basis points stay at zero
        slope = (1.0 - tau) if s > 0 else tau
        after = np.where(np.abs(r_other) > tol, r_other, -g)
        slope -= float(g @ np.where(after > 0, tau, tau - 1.0))
        if slope >= 0:
            return vertex, False
        with np.errstate(divide="ignore", invalid="ignore"):
            t = r_other / g
        cand = np.flatnonzero((np.abs(r_other) > tol) & (t > 0) & np.isfinite(t))
        if cand.size == 0:
            return vertex, False
        cand = cand[np.argsort(t[cand], kind="stable")]
        entering = None
        for i in cand:
            slope += abs(g[i])
            if slope >= 0:
                entering = i
                break
        if entering is None:
            return vertex, False
        basis[k] = np.flatnonzero(others)[entering]
    return vertex, False


def vertex_certificate(data: GroupedDesign, beta: np.ndarray, tau: float,
                       max_pivots: int | None = None):
    """Certified exact minimizer of the unpenalized problem near ``beta``, or None.

    See :func:`simplex_refine`; ``max_pivots`` defaults to ``2 r``.
    """
    pivots = 2 * data.r if max_pivots is None else max_pivots
    vertex, certified = simplex_refine(data, beta, tau, pivots)
    return vertex if certified else None


def _polish_vertex(data: GroupedDesign, beta: np.ndarray, tau: float) -> np.ndarray:
    """Replace ``beta`` by a refined vertex if that does not raise the loss."""
    vertex, _ = simplex_refine(data, beta, tau, 10 * data.r)
    if vertex is not None and quantile_process(vertex, data, tau) <= quantile_process(beta, data, tau):
        return vertex
    return beta


def _structure_basis(coef: GroupedCoefficients) -> np.ndarray:
    """Columns spanning all coefficients with the zero and fusion pattern of ``coef``.

    Each run of fused nonzero groups shares one vector of the narrowest
    width in the run; zero groups get no columns.
    """
    sizes, slices = coef.group_sizes, group_slices(coef.group_sizes)
    fused = set(fused_pairs_of(coef))
    nonzero = coef.norms() > 0
    cols = []
    j = 0
    while j < coef.p:
        end = j + 1
        while end < coef.p and end in fused:
            end += 1
        if nonzero[j]:
            for k in range(min(sizes[i] for i in range(j, end))):
                col = np.zeros(coef.values.size)
                for i in range(j, end):
                    col[slices[i].start + k] = 1.0
                cols.append(col)
        j = end
    return np.array(cols).T.reshape(coef.values.size, len(cols))


def _smooth_newton(data, M, theta, E, psi, t_group, t_diff, D, diff_slices, q, steps=30):
    """Newton iterations on the problem with fixed residual signs off ``E`` and
    exact interpolation on ``E``; every step is accepted only if ``q`` drops."""
    XM = data.X @ M
    A, b = XM[E], data.y[E]
    lin = -(XM[~E].T @ psi[~E])
    slices = data.slices
    best = q(M @ theta)
    for _ in range(steps):
        beta = M @ theta
        grad, hess = lin.copy(), np.zeros((M.shape[1], M.shape[1]))
        blocks = [(t_group[j], M[slices[j]], beta[slices[j]]) for j in range(data.p)]
        blocks += [(t_diff[k], D[diff_slices[k]] @ M, D[diff_slices[k]] @ beta)
                   for k in range(data.p - 1)]
        for t, B, v in blocks:
            nv = np.linalg.norm(v)
            if t == 0 or nv == 0:
                continue
            u = v / nv
            grad += t * B.T @ u
            hess += t / nv * B.T @ (B - np.outer(u, u @ B))
        m = A.shape[0]
        kkt = np.zeros((hess.shape[0] + m, hess.shape[0] + m))
        kkt[:hess.shape[0], :hess.shape[0]] = hess
        kkt[:hess.shape[0], hess.shape[0]:] = A.T
        kkt[hess.shape[0]:, :hess.shape[0]] = A
        rhs = np.concatenate((-grad, b - A @ theta))
        step = np.linalg.lstsq(kkt, rhs, rcond=1e-12)[0][:hess.shape[0]]
        length, moved = 1.0, False
        for _ in range(40):
            trial = theta + length * step
            val = q(M @ trial)
            if val < best:
                theta, best, moved = trial, val, True
                break
            length *= 0.5
        if not moved:
            break
    return theta, best


def _polish_structure(data: GroupedDesign, values: np.ndarray, t_group, t_diff,
                      tau: float, q) -> np.ndarray:
    """Solve the objective restricted to the zero and fusion pattern of ``values``.

    On that pattern the group and difference norms are smooth, and the
    check loss is linear once the sign of every residual is fixed and the
    residuals that vanish at the optimum are held at zero.  A few Newton
    steps then land on the restricted optimum, which the iterative solver
    only approaches.  The candidate interpolation sets come from several
    cutoffs on the current residuals; the result never has a larger
    objective than ``values``.
    """
    coef = GroupedCoefficients(values, data.group_sizes)
    M = _structure_basis(coef)
    if M.shape[1] == 0:
        return values
    theta = np.linalg.lstsq(M, values, rcond=None)[0]
    res = data.y - data.X @ values
    scale = 1.0 + np.abs(data.y).max()
    D, dsizes = difference_operator(data.group_sizes)
    dstarts = np.concatenate(([0], np.cumsum(dsizes)))
    diff_slices = [slice(int(dstarts[k]), int(dstarts[k + 1])) for k in range(data.p - 1)]
    best_values, best = values, q(values)
    order = np.argsort(np.abs(res))
    for cutoff in (1e-4, 1e-5, 1e-6, 1e-7):
        E = np.abs(res) <= cutoff * scale
        if E.sum() > M.shape[1]:
            E = np.zeros(data.n, bool)
            E[order[:M.shape[1]]] = True
        psi = np.where(res < 0, tau - 1.0, tau)
        th, val = _smooth_newton(data, M, theta, E, psi, t_group, t_diff, D, diff_slices, q)
        if val < best:
            best_values, best = M @ th, val
    return best_values


def _block_scale(data: GroupedDesign) -> float:
    # copies are weighted like an average design column so one rho suits all blocks
    return max(math.sqrt(np.einsum("ij,ij->", data.X, data.X) / data.r), 1e-8)


def pilot_fit(data: GroupedDesign, tau: float = 0.5,
              controls: SolverControls | None = None) -> FitResult:
    """Unpenalized quantile regression estimate used to build adaptive weights.

    Requires fewer columns than observations.  Every group is reported
    active; no thresholding is applied.
    """
    controls = controls or SolverControls()
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must lie strictly between 0 and 1, got {tau!r}")
    if data.r >= data.n:
        raise ValueError(
            f"pilot fit needs fewer columns than observations (r={data.r}, n={data.n})")
    system = SplitSystem(data, _block_scale(data))
    t_group = np.zeros(data.p)
    t_diff = np.zeros(data.p - 1)
    (values, _), state, converged, (ph, dh) = _run_admm(
        system, tau, t_group, t_diff, controls, False,
        on_chunk=lambda st: vertex_certificate(data, st.beta, tau))
    values = _polish_vertex(data, values, tau)
    coef = GroupedCoefficients(values, data.group_sizes)
    return FitResult(
        coefficients=coef,
        active_groups=tuple(range(data.p)),
        fused_pairs=fused_pairs_of(coef),
        objective_value=quantile_process(coef, data, tau),
        iterations=state.iteration,
        converged=converged,
        primal_history=ph,
        dual_history=dh,
        penalty_parameter=state.rho,
    )


def fit(data: GroupedDesign, weights: AdaptiveWeights, config: FitConfig) -> FitResult:
    """Minimize the penalized objective; report exact zeros and exact fusions."""
    if weights.p != data.p:
        raise ValueError(f"weights for {weights.p} groups, design has {data.p}")
    system = SplitSystem(data, _block_scale(data))
    t_group = config.mu1 * weights.w1
    t_diff = config.mu2 * weights.w2
    controls = config.solver
    unpenalized = not (np.any(t_group) or np.any(t_diff))
    certify = None
    if unpenalized:
        # the zero-penalty problem is the pilot problem; certify it the same way
        certify = lambda st: vertex_certificate(data, st.beta, config.tau)
    (values, diff_block), state, converged, (ph, dh) = _run_admm(
        system, config.tau, t_group, t_diff, controls, not unpenalized, on_chunk=certify)
    if unpenalized:
        values = _polish_vertex(data, values, config.tau)
    values = _postprocess(values, diff_block, system, controls.zero_threshold)
    if not unpenalized:
        values = _polish_structure(
            data, values, t_group, t_diff, config.tau,
            lambda v: penalized_objective(v, data, weights, config))
    coef = GroupedCoefficients(values, data.group_sizes)
    return FitResult(
        coefficients=coef,
        active_groups=select_active_groups(coef),
        fused_pairs=fused_pairs_of(coef),
        objective_value=penalized_objective(coef, data, weights, config),
        iterations=state.iteration,
        converged=converged,
        primal_history=ph,
        dual_history=dh,
        penalty_parameter=state.rho,
    )


def fit_adaptive(data: GroupedDesign, config: FitConfig, cap: float | None = None,
                 pilot: FitResult | None = None):
    """Pilot fit, adaptive weights, penalized fit.  Returns ``(result, pilot, weights)``."""
    if pilot is None:
        pilot = pilot_fit(data, config.tau, config.solver)
    weights = compute_weights(pilot, config.gamma, DEFAULT_CAP if cap is None else cap)
    return fit(data, weights, config), pilot, weights
