"""Compiled inner loop of the ADMM solver.

The loop mutates a state tuple in place so the driver in ``solver`` can run
it in chunks and inspect iterates in between.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _cho_solve(L, b, out):
    r = b.shape[0]
    for i in range(r):
        s = b[i]
        for k in range(i):
            s -= L[i, k] * out[k]
        out[i] = s / L[i, i]
    for i in range(r - 1, -1, -1):
        s = out[i]
        for k in range(i + 1, r):
            s -= L[k, i] * out[k]
        out[i] = s / L[i, i]


@njit(cache=True)
def _block_shrink(v, thresholds, starts, sizes, out):
    for b in range(starts.shape[0]):
        s, w = starts[b], sizes[b]
        acc = 0.0
        for k in range(s, s + w):
            acc += v[k] * v[k]
        norm = math.sqrt(acc)
        if norm <= thresholds[b]:
            for k in range(s, s + w):
                out[k] = 0.0
        else:
            scale = 1.0 - thresholds[b] / norm
            for k in range(s, s + w):
                out[k] = v[k] * scale


@njit(cache=True)
def objective(values, X, y, D, tau, t_group, t_diff, starts, sizes, dstarts, dsizes):
    res = y - X @ values
    total = 0.0
    for i in range(res.shape[0]):
        if res[i] < 0:
            total += (tau - 1.0) * res[i]
        else:
            total += tau * res[i]
    for b in range(starts.shape[0]):
        acc = 0.0
        for k in range(starts[b], starts[b] + sizes[b]):
            acc += values[k] * values[k]
        total += t_group[b] * math.sqrt(acc)
    if D.shape[0] > 0:
        dv = D @ values
        for b in range(dstarts.shape[0]):
            acc = 0.0
            for k in range(dstarts[b], dstarts[b] + dsizes[b]):
                acc += dv[k] * dv[k]
            total += t_diff[b] * math.sqrt(acc)
    return total


@njit(cache=True)
def admm_chunk(X, Xt, y, D, Dt, L, starts, sizes, dstarts, dsizes,
               t_group, t_diff, tau,
               beta, z, g, h, uz, ug, uh, scalars, primal_hist, dual_hist,
               n_steps, abs_tol, rel_tol, max_iterations, adapt_interval, adapt_until,
               relaxation, report_group_block, best, best_h, block_scale):
    """Run at most ``n_steps`` iterations.

    ``scalars`` holds ``[rho, iteration, converged, best_score]`` and is
    updated in place, as are all iterate arrays.  The copies are held in
    scaled form: ``g = block_scale * beta`` and ``h = block_scale * D beta``
    at consensus.
    """
    sc = block_scale
    n = y.shape[0]
    r = beta.shape[0]
    m = h.shape[0]
    sqrt_pri = math.sqrt(n + r + m)
    sqrt_dual = math.sqrt(r)
    y_norm = math.sqrt(np.dot(y, y))
    a = relaxation
    rhs = np.empty(r)
    xz = np.empty(n)
    xg = np.empty(r)
    xh = np.empty(m)
    g_new = np.empty(r)
    h_new = np.empty(m)

    for _ in range(n_steps):
        rho = scalars[0]
        k = int(scalars[1]) + 1
        if k > max_iterations:
            break

        # beta-update: (X'X + s^2 (I + D'D)) beta = X'(y - z - uz) + s (g - ug) + s D'(h - uh)
        rhs[:] = Xt @ (y - z - uz) + sc * (g - ug)
        if m > 0:
            rhs += sc * (Dt @ (h - uh))
        _cho_solve(L, rhs, beta)
        Xb = X @ beta
        Db = D @ beta if m > 0 else np.zeros(0)

        # relaxed images, then the three proximal steps
        xz[:] = a * (y - Xb) + (1.0 - a) * z
        xg[:] = a * sc * beta + (1.0 - a) * g
        if m > 0:
            xh[:] = a * sc * Db + (1.0 - a) * h
        step = 1.0 / rho
        upper = step * tau
        lower = -step * (1.0 - tau)
        z_new = np.empty(n)
        for i in range(n):
            v = xz[i] - uz[i]
            if v > upper:
                z_new[i] = v - upper
            elif v < lower:
                z_new[i] = v - lower
            else:
                z_new[i] = 0.0
        _block_shrink(xg + ug, t_group / (sc * rho), starts, sizes, g_new)
        if m > 0:
            _block_shrink(xh + uh, t_diff / (sc * rho), dstarts, dsizes, h_new)

        dz = z_new - z
        dg = g_new - g
        dh = h_new - h if m > 0 else np.zeros(0)
        z[:] = z_new
        g[:] = g_new
        if m > 0:
            h[:] = h_new
        uz += z - xz
        ug += xg - g
        if m > 0:
            uh += xh - h

        rz = Xb + z - y
        rg = sc * beta - g
        primal2 = np.dot(rz, rz) + np.dot(rg, rg)
        if m > 0:
            rh = sc * Db - h
            primal2 += np.dot(rh, rh)
        primal = math.sqrt(primal2)
        dvec = Xt @ dz - sc * dg
        if m > 0:
            dvec -= sc * (Dt @ dh)
        dual = rho * math.sqrt(np.dot(dvec, dvec))
        primal_hist[k - 1] = primal
        dual_hist[k - 1] = dual
        scalars[1] = k

        ax2 = np.dot(Xb, Xb) + sc * sc * np.dot(beta, beta)
        bz2 = np.dot(z, z) + np.dot(g, g)
        if m > 0:
            ax2 += sc * sc * np.dot(Db, Db)
            bz2 += np.dot(h, h)
        eps_pri = sqrt_pri * abs_tol + rel_tol * max(math.sqrt(ax2), math.sqrt(bz2), y_norm)
        # per-block dual scale: the summed A'u vanishes at an unpenalized optimum
        xu = Xt @ uz
        scale = max(math.sqrt(np.dot(xu, xu)), sc * math.sqrt(np.dot(ug, ug)))
        if m > 0:
            du = Dt @ uh
            scale = max(scale, sc * math.sqrt(np.dot(du, du)))
        eps_dual = sqrt_dual * abs_tol + rel_tol * rho * scale
        if primal <= eps_pri and dual <= eps_dual:
            scalars[2] = 1.0
            break

        if k % adapt_interval == 0:
            cand = g / sc if report_group_block else beta
            score = objective(cand, X, y, D, tau, t_group, t_diff,
                              starts, sizes, dstarts, dsizes)
            if score < scalars[3]:
                scalars[3] = score
                best[:] = cand
                if m > 0:
                    best_h[:] = h / sc
            if k <= adapt_until:
                # balance residuals relative to their own stopping thresholds
                if primal > 10.0 * dual:
                    scalars[0] = rho * 2.0
                    uz *= 0.5
                    ug *= 0.5
                    uh *= 0.5
                elif dual > 10.0 * primal:
                    scalars[0] = rho / 2.0
                    uz *= 2.0
                    ug *= 2.0
                    uh *= 2.0
