"""Common spatial patterns for two-class oscillatory power discrimination.

Spatial filters w maximize the variance ratio between classes by solving
the generalized eigenproblem

    C1 w = lambda (C1 + C2) w,

where C1, C2 are class-mean covariance matrices of trace-normalized trial
covariances.  Eigenvalues lie in [0, 1]; filters at both spectral ends
capture power increases for one class or the other.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .dataset import Session

__all__ = [
    "ClassCovariance",
    "CspModel",
    "estimate_covariance",
    "fit_csp",
    "csp_features",
    "fit_csp_from_session",
]

COMPOSITE_RIDGE = 1e-10


@dataclass(frozen=True, eq=False)
class ClassCovariance:
    """Mean trace-normalized spatial covariance of one class."""

    matrix: np.ndarray
    n_trials: int

    def __post_init__(self):
        matrix = np.asarray(self.matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError(f"covariance must be square, got shape {matrix.shape}")
        if self.n_trials < 1:
            raise ValueError("covariance needs at least one trial")
        object.__setattr__(self, "matrix", matrix)


@dataclass(frozen=True, eq=False)
class CspModel:
    """Fitted spatial filters.

    Attributes
    ----------
    filters : ndarray, shape (n_channels, 2m)
        Columns are spatial filters w with w^T (C1+C2) w = 1.  The first m
        belong to the largest eigenvalues (descending), the last m to the
        smallest (still descending overall).
    patterns : ndarray, shape (n_channels, 2m)
        Corresponding columns of the inverse-transpose filter matrix; these
        are the scalp projections of the extracted sources.
    eigenvalues : ndarray, shape (2m,)
        Variance ratios in [0, 1], sorted descending.
    """

    filters: np.ndarray
    patterns: np.ndarray
    eigenvalues: np.ndarray

    def __post_init__(self):
        for name in ("filters", "patterns", "eigenvalues"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))

    @property
    def n_filters(self) -> int:
        return self.filters.shape[1]


def estimate_covariance(trials) -> ClassCovariance:
    """Average X X^T / trace(X X^T) over the given trial data arrays.

    Per-trial trace normalization equalizes broadband amplitude across
    trials before averaging, so no single high-power trial dominates.

    Parameters
    ----------
    trials : sequence of ndarray, each shape (n_channels, n_samples)

    Returns
    -------
    ClassCovariance
    """
    arrays = [np.asarray(t, dtype=float) for t in trials]
    if not arrays:
        raise ValueError("need at least one trial to estimate a covariance")
    n_ch = arrays[0].shape[0]
    acc = np.zeros((n_ch, n_ch))
    for i, x in enumerate(arrays):
        if x.ndim != 2 or x.shape[0] != n_ch:
            raise ValueError(f"trial {i}: expected {n_ch} channels, got shape {x.shape}")
        cov = x @ x.T
        tr = np.trace(cov)
        if tr <= 0:
            raise ValueError(f"trial {i}: zero-energy trial, cannot trace-normalize")
        acc += cov / tr
    return ClassCovariance(matrix=acc / len(arrays), n_trials=len(arrays))


def fit_csp(cov_pos: ClassCovariance, cov_neg: ClassCovariance, m: int = 3) -> CspModel:
    """Solve C1 w = lambda (C1+C2) w and keep the m top and m bottom filters.

    The composite matrix is used as-is when positive definite; only if the
    factorization fails is a ridge of 1e-10 added and the solve retried, so
    well-posed inputs see no perturbation at all.  Each filter's sign is
    canonicalized so its largest-magnitude entry is positive.
    """
    c1 = cov_pos.matrix
    c2 = cov_neg.matrix
    if c1.shape != c2.shape:
        raise ValueError(f"covariance shapes differ: {c1.shape} vs {c2.shape}")
    n_ch = c1.shape[0]
    if not (1 <= 2 * m <= n_ch):
        raise ValueError(f"need 1 <= 2m <= n_channels, got m={m} with {n_ch} channels")

    composite = c1 + c2
    try:
        vals, vecs = scipy.linalg.eigh(c1, composite)  # ascending, w^T composite w = 1
    except (scipy.linalg.LinAlgError, np.linalg.LinAlgError):
        composite = composite + COMPOSITE_RIDGE * np.eye(n_ch)
        try:
            vals, vecs = scipy.linalg.eigh(c1, composite)
        except (scipy.linalg.LinAlgError, np.linalg.LinAlgError) as exc:
            raise ValueError(
                f"composite covariance is singular beyond the ridge floor: {exc}"
            )

    order = np.argsort(vals)[::-1]
    vals = np.clip(vals[order], 0.0, 1.0)
    vecs = vecs[:, order]

    keep = np.concatenate([np.arange(m), np.arange(n_ch - m, n_ch)])
    patterns_all = composite @ vecs  # inverse-transpose of the full filter matrix

    filters = vecs[:, keep].copy()
    patterns = patterns_all[:, keep].copy()
    for j in range(filters.shape[1]):
        k = np.argmax(np.abs(filters[:, j]))
        if filters[k, j] < 0:
            filters[:, j] *= -1.0
            patterns[:, j] *= -1.0
    return CspModel(filters=filters, patterns=patterns, eigenvalues=vals[keep])


def csp_features(model: CspModel, data: np.ndarray) -> np.ndarray:
    """Log-variance share of each filtered signal.

    f_j = log(v_j / sum_k v_k) with v_j = mean((w_j^T X)^2).  The shared
    denominator makes features invariant to global amplitude scaling.
    """
    data = np.asarray(data, dtype=float)
    projected = model.filters.T @ data
    v = np.mean(projected**2, axis=1)
    total = v.sum()
    if total <= 0:
        raise ValueError("zero-energy trial, log-variance features undefined")
    return np.log(v / total)


def fit_csp_from_session(session: Session, m: int = 3, trial_indices=None):
    """Convenience: class covariances and CSP model from (a subset of) a session."""
    trials = session.trials
    if trial_indices is not None:
        trials = [trials[i] for i in trial_indices]
    pos = [t.data for t in trials if t.label == 1]
    neg = [t.data for t in trials if t.label == -1]
    if not pos or not neg:
        raise ValueError("both classes must be present to fit CSP")
    return fit_csp(estimate_covariance(pos), estimate_covariance(neg), m=m)
