"""Freeze reference optima for the tiny-instance solver equivalence test.

Run from the repository root:

    python tests/oracles/make_solver_oracle.py

Each instance is solved two ways, independently of the package solver:
an interior-point conic solve (Clarabel via cvxpy, tight tolerances) and a
plain subgradient descent with diminishing steps from random starts.  The
frozen reference is the smaller of the two objective values.
"""

import json
from pathlib import Path

import cvxpy as cp
import numpy as np

SEED = 20261015
N_INSTANCES = 50
OUT = Path(__file__).resolve().parents[1] / "data" / "solver_oracle.json"


def padded_diff_matrix(sizes):
    starts = np.concatenate(([0], np.cumsum(sizes)[:-1]))
    rows = []
    for j in range(1, len(sizes)):
        width = max(sizes[j], sizes[j - 1])
        block = np.zeros((width, sum(sizes)))
        for k in range(width):
            if k < sizes[j]:
                block[k, starts[j] + k] = 1.0
            if k < sizes[j - 1]:
                block[k, starts[j - 1] + k] = -1.0
        rows.append(block)
    return rows


def objective_np(b, X, y, sizes, tau, t1, t2):
    res = y - X @ b
    loss = np.sum(np.maximum(tau * res, (tau - 1) * res))
    starts = np.concatenate(([0], np.cumsum(sizes)))
    pen = sum(t1[j] * np.linalg.norm(b[starts[j]:starts[j + 1]]) for j in range(len(sizes)))
    pen += sum(t2[k] * np.linalg.norm(Dk @ b) for k, Dk in enumerate(padded_diff_matrix(sizes)))
    return loss + pen


def conic_solve(X, y, sizes, tau, t1, t2):
    b = cp.Variable(X.shape[1])
    res = y - X @ b
    starts = np.concatenate(([0], np.cumsum(sizes)))
    terms = [cp.sum(cp.maximum(tau * res, (tau - 1) * res))]
    terms += [t1[j] * cp.norm(b[starts[j]:starts[j + 1]]) for j in range(len(sizes))]
    terms += [t2[k] * cp.norm(Dk @ b) for k, Dk in enumerate(padded_diff_matrix(sizes))]
    prob = cp.Problem(cp.Minimize(cp.sum(terms)))
    prob.solve(solver="CLARABEL", tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12,
               max_iter=500)
    return np.asarray(b.value)


def subgradient(b, X, y, sizes, tau, t1, t2):
    res = y - X @ b
    psi = np.where(res < 0, tau - 1.0, tau)
    g = -X.T @ psi
    starts = np.concatenate(([0], np.cumsum(sizes)))
    for j in range(len(sizes)):
        v = b[starts[j]:starts[j + 1]]
        nv = np.linalg.norm(v)
        if nv > 0:
            g[starts[j]:starts[j + 1]] += t1[j] * v / nv
    for k, Dk in enumerate(padded_diff_matrix(sizes)):
        v = Dk @ b
        nv = np.linalg.norm(v)
        if nv > 0:
            g += t2[k] * Dk.T @ (v / nv)
    return g


def subgradient_descent(X, y, sizes, tau, t1, t2, rng, iterations=200_000, restarts=5):
    best = None
    for _ in range(restarts):
        b = rng.standard_normal(X.shape[1])
        step0 = 1.0 / np.linalg.norm(X, 2)
        for k in range(1, iterations + 1):
            b = b - step0 / np.sqrt(k) * subgradient(b, X, y, sizes, tau, t1, t2)
            if k % 1000 == 0:
                val = objective_np(b, X, y, sizes, tau, t1, t2)
                if best is None or val < best[0]:
                    best = (val, b.copy())
    return best


def make_instance(rng):
    p = int(rng.integers(1, 4))
    sizes = [int(rng.integers(1, 3)) for _ in range(p)]
    r = sum(sizes)
    n = int(rng.integers(max(r + 5, 10), 31))
    X = rng.standard_normal((n, r))
    truth = []
    for j, d in enumerate(sizes):
        kind = rng.choice(["zero", "copy", "fresh"]) if j else rng.choice(["zero", "fresh"])
        if kind == "zero":
            truth.append(np.zeros(d))
        elif kind == "copy" and sizes[j - 1] == d:
            truth.append(truth[-1].copy())
        else:
            truth.append(rng.uniform(0.5, 2.0, d) * rng.choice([-1, 1], d))
    beta0 = np.concatenate(truth)
    noise = rng.standard_normal(n) if rng.random() < 0.5 else rng.laplace(size=n)
    y = X @ beta0 + noise
    tau = float(rng.choice([0.25, 0.5, 0.75]))
    # independent pilot: unpenalized conic solve, gamma = 1 weights, cap 1e-10
    pilot = conic_solve(X, y, sizes, tau, np.zeros(p), np.zeros(p - 1))
    starts = np.concatenate(([0], np.cumsum(sizes)))
    norms = np.array([np.linalg.norm(pilot[starts[j]:starts[j + 1]]) for j in range(p)])
    diffs = np.array([np.linalg.norm(Dk @ pilot) for Dk in padded_diff_matrix(sizes)])
    w1 = 1.0 / np.maximum(norms, 1e-10)
    w2 = 1.0 / np.maximum(diffs, 1e-10)
    mu1 = float(np.exp(rng.uniform(np.log(0.25), np.log(4.0))) * n ** 0.25)
    mu2 = float(np.exp(rng.uniform(np.log(0.25), np.log(4.0))) * n ** 0.25)
    return dict(n=n, group_sizes=sizes, X=X, y=y, tau=tau, mu1=mu1, mu2=mu2,
                w1=w1, w2=w2, gamma=1.0)


def main():
    rng = np.random.default_rng(SEED)
    records = []
    for i in range(N_INSTANCES):
        inst = make_instance(rng)
        X, y, sizes, tau = inst["X"], inst["y"], inst["group_sizes"], inst["tau"]
        t1 = inst["mu1"] * inst["w1"]
        t2 = inst["mu2"] * inst["w2"]
        b_conic = conic_solve(X, y, sizes, tau, t1, t2)
        q_conic = objective_np(b_conic, X, y, sizes, tau, t1, t2)
        q_sub, _ = subgradient_descent(X, y, sizes, tau, t1, t2, rng)
        ref = min(q_conic, q_sub)
        print(f"{i:2d} n={inst['n']:2d} sizes={sizes} tau={tau} conic={q_conic:.10f} "
              f"subgradient gap={(q_sub - q_conic) / max(1, q_conic):.2e}")
        records.append({
            "n": inst["n"], "group_sizes": sizes, "tau": tau, "gamma": 1.0,
            "mu1": inst["mu1"], "mu2": inst["mu2"],
            "w1": inst["w1"].tolist(), "w2": inst["w2"].tolist(),
            "X": X.tolist(), "y": y.tolist(),
            "objective_conic": q_conic, "objective_subgradient": q_sub,
            "objective_reference": ref,
        })
    OUT.write_text(json.dumps({"seed": SEED, "instances": records}, indent=1))


if __name__ == "__main__":
    main()
