"""Mean logistic loss, its gradient, and the matching dual quantities.

Scores z and labels y in {1, -1} give

    L(z) = (1/n) sum_i log(1 + exp(-y_i z_i)),
    dL/dz_i = -y_i / (n (1 + exp(y_i z_i))).

The Fenchel conjugate of the per-sample loss is the binary negative
entropy; after folding signs the dual variables alpha_i live in [0, 1] and
the dual objective is the mean entropy of alpha (``dual_value``).
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit, xlogy

__all__ = ["logistic_loss_and_grad", "logistic_loss", "dual_value", "fit_bias"]


def logistic_loss(scores: np.ndarray, labels: np.ndarray) -> float:
    margins = np.asarray(labels, dtype=float) * np.asarray(scores, dtype=float)
    return float(np.mean(np.logaddexp(0.0, -margins)))


def logistic_loss_and_grad(scores: np.ndarray, labels: np.ndarray):
    """Loss value and gradient with respect to the scores.

    Returns
    -------
    (float, ndarray)
        Mean loss and per-score gradient -y_i alpha_i / n with
        alpha_i = sigmoid(-y_i z_i).
    """
    scores = np.asarray(scores, dtype=float)
    y = np.asarray(labels, dtype=float)
    if scores.shape != y.shape:
        raise ValueError(f"scores shape {scores.shape} != labels shape {y.shape}")
    margins = y * scores
    loss = float(np.mean(np.logaddexp(0.0, -margins)))
    grad = -y * expit(-margins) / y.shape[0]
    return loss, grad


def dual_value(alpha: np.ndarray) -> float:
    """-(1/n) sum_i [a log a + (1-a) log(1-a)], the folded dual objective."""
    alpha = np.asarray(alpha, dtype=float)
    if alpha.size == 0:
        return 0.0
    if np.any(alpha < 0.0) or np.any(alpha > 1.0):
        raise ValueError("dual variables must lie in [0, 1]")
    ent = xlogy(alpha, alpha) + xlogy(1.0 - alpha, 1.0 - alpha)
    return float(-np.mean(ent))


def fit_bias(scores: np.ndarray, labels: np.ndarray, b0: float = 0.0) -> float:
    """Exact 1-D minimizer of the mean logistic loss over an additive bias.

    Newton iteration with bisection safeguards; the derivative
    g(b) = -(1/n) sum_i y_i sigmoid(-y_i (z_i + b)) is strictly increasing,
    so the root is unique whenever both classes are present.
    """
    scores = np.asarray(scores, dtype=float)
    y = np.asarray(labels, dtype=float)
    n = y.shape[0]
    if not (np.any(y > 0) and np.any(y < 0)):
        raise ValueError("bias fit needs both classes present")

    def grad(b):
        return float(-np.sum(y * expit(-y * (scores + b))) / n)

    lo, hi = -60.0, 60.0
    b = float(np.clip(b0, lo, hi))
    for _ in range(100):
        g = grad(b)
        if abs(g) < 1e-14:
            return b
        if g > 0:
            hi = min(hi, b)
        else:
            lo = max(lo, b)
        curv = float(np.sum(expit(-y * (scores + b)) * expit(y * (scores + b))) / n)
        step = g / curv if curv > 1e-18 else 0.0
        b_new = b - step
        if not (lo < b_new < hi):  # fall back to bisection when Newton leaves the bracket
            b_new = 0.5 * (lo + hi)
        if abs(b_new - b) < 1e-15:
            return b_new
        b = b_new
    return b
