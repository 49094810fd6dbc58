"""Linear discriminant analysis with analytic covariance shrinkage.

The pooled within-class covariance S (denominator n - 2) is blended with a
scaled identity target, S_hat = (1 - gamma) S + gamma nu I with
nu = trace(S) / d.  The shrinkage intensity gamma comes from the
Ledoit-Wolf formula evaluated on the class-centered rows, so no
cross-validation is needed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["ShrinkageLdaModel", "fit_shrinkage_lda", "lda_predict", "ledoit_wolf_gamma"]


@dataclass(frozen=True, eq=False)
class ShrinkageLdaModel:
    """Fitted linear discriminant w^T x + b with recorded shrinkage."""

    weights: np.ndarray
    bias: float
    gamma: float

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1:
            raise ValueError(f"weights must be 1-D, got shape {w.shape}")
        if not (0.0 <= self.gamma <= 1.0):
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", float(self.bias))


def ledoit_wolf_gamma(centered: np.ndarray, pooled: np.ndarray) -> float:
    """Shrinkage intensity from class-centered rows and the pooled covariance.

    gamma = min(b2, d2) / d2 where d2 measures the distance of the pooled
    covariance from its identity target and b2 the dispersion of per-row
    outer products around it (both in the dimension-normalized Frobenius
    norm).  Returns 0 when the pooled covariance already equals the target.
    """
    n, d = centered.shape
    nu = np.trace(pooled) / d
    diff = pooled - nu * np.eye(d)
    d2 = np.sum(diff * diff) / d
    if d2 <= 0.0:
        return 0.0
    # sum_k ||z_k z_k^T - S||_F^2 expanded to avoid forming n outer products
    sq_norms = np.einsum("ij,ij->i", centered, centered)
    quad = np.sum((centered @ pooled) * centered)  # sum_k z_k^T S z_k
    b2 = (
        np.sum(sq_norms**2) - 2.0 * quad + n * np.sum(pooled * pooled)
    ) / (n * n * d)
    return float(min(b2, d2) / d2)


def fit_shrinkage_lda(features: np.ndarray, labels: np.ndarray) -> ShrinkageLdaModel:
    """Fit the shrunk discriminant on rows of features with labels in {1, -1}.

    Parameters
    ----------
    features : ndarray, shape (n_trials, n_features)
    labels : ndarray of +1 / -1, shape (n_trials,)

    Returns
    -------
    ShrinkageLdaModel
        w = S_hat^{-1} (mu_pos - mu_neg), b = -w^T (mu_pos + mu_neg) / 2.
    """
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels)
    if x.ndim != 2:
        raise ValueError(f"features must be 2-D, got shape {x.shape}")
    if y.shape != (x.shape[0],):
        raise ValueError("labels must align with feature rows")
    if not np.all(np.isin(y, (1, -1))):
        raise ValueError("labels must be +1 or -1")
    pos = x[y == 1]
    neg = x[y == -1]
    if len(pos) < 2 or len(neg) < 2:
        raise ValueError("need at least two trials per class")
    n, d = x.shape

    mu_pos = pos.mean(axis=0)
    mu_neg = neg.mean(axis=0)
    centered = np.concatenate([pos - mu_pos, neg - mu_neg], axis=0)
    pooled = centered.T @ centered / (n - 2)

    nu = np.trace(pooled) / d
    if nu <= 0.0:
        raise ValueError("pooled covariance has non-positive trace; features are degenerate")
    gamma = ledoit_wolf_gamma(centered, pooled)
    shrunk = (1.0 - gamma) * pooled + gamma * nu * np.eye(d)

    try:
        w = np.linalg.solve(shrunk, mu_pos - mu_neg)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"shrunk covariance is numerically singular: {exc}")
    b = -0.5 * float(w @ (mu_pos + mu_neg))
    return ShrinkageLdaModel(weights=w, bias=b, gamma=gamma)


def lda_predict(model: ShrinkageLdaModel, features: np.ndarray) -> np.ndarray:
    """Predicted labels (+1 on ties) for rows of features."""
    x = np.atleast_2d(np.asarray(features, dtype=float))
    scores = x @ model.weights + model.bias
    return np.where(scores >= 0.0, 1, -1)
