"""Closed-form proximal maps for the nonsmooth terms of the objective.

All maps return exact zeros on their zero branch; downstream group
selection depends on that.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ProxQuery:
    anchor: np.ndarray
    step: float
    tau: float = 0.5

    def __post_init__(self):
        anchor = np.asarray(self.anchor, dtype=float)
        if not np.all(np.isfinite(anchor)):
            raise ValueError("anchor must be finite")
        _check_step(self.step)
        object.__setattr__(self, "anchor", anchor)


def _check_step(step) -> None:
    if not (math.isfinite(step) and step > 0):
        raise ValueError(f"step must be a positive finite number, got {step!r}")


def prox_check(a, step: float, tau: float):
    """Minimizer of ``step * rho_tau(x) + (x - a)**2 / 2``.

    Elementwise on arrays.  The dead zone is ``[-step*(1-tau), step*tau]``.
    """
    _check_step(step)
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must lie strictly between 0 and 1, got {tau!r}")
    a_arr = np.asarray(a, dtype=float)
    upper = step * tau
    lower = -step * (1.0 - tau)
    out = np.where(a_arr > upper, a_arr - upper,
                   np.where(a_arr < lower, a_arr - lower, 0.0))
    return float(out) if out.ndim == 0 else out


def block_soft_threshold(v, threshold: float) -> np.ndarray:
    """Minimizer of ``threshold * ||x|| + ||x - v||**2 / 2``.

    Ties (``||v|| == threshold``) go to zero.
    """
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("block_soft_threshold requires finite input")
    if threshold < 0 or not math.isfinite(threshold):
        raise ValueError(f"threshold must be nonnegative and finite, got {threshold!r}")
    norm = float(np.linalg.norm(v))
    if norm <= threshold:
        return np.zeros_like(v)
    return v * (1.0 - threshold / norm)


def group_soft_threshold(v: np.ndarray, thresholds: np.ndarray,
                         starts: np.ndarray, sizes: np.ndarray) -> np.ndarray:
    """Block soft thresholding applied to every contiguous block of ``v`` at once.

    Block ``k`` spans ``v[starts[k]:starts[k] + sizes[k]]`` and uses
    ``thresholds[k]``.  Equivalent to calling :func:`block_soft_threshold`
    block by block.
    """
    norms = np.sqrt(np.add.reduceat(v * v, starts))
    keep = norms > thresholds
    scale = np.zeros_like(norms)
    scale[keep] = 1.0 - thresholds[keep] / norms[keep]
    return v * np.repeat(scale, sizes)
