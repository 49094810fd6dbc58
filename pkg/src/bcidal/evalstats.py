"""Blockwise cross-validation and repeated-measures statistics.

Trials are chronological, so folds are contiguous blocks and a margin of
trials on each side of the test block is excluded from training; temporal
proximity is the leakage channel this guards against.  Hyperparameter
selection is nested: the regularization path is scored by an inner
blockwise split of each outer training set, never touching the outer test
block.  Method comparison across subjects uses a one-way within-subjects
ANOVA with Bonferroni-adjusted paired t tests; both p-values come from the
regularized incomplete beta function.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import betainc

from .csp import csp_features, fit_csp_from_session
from .dal import (
    PRESET_BINDINGS,
    DalProblem,
    RegularizerSpec,
    SolverOptions,
    dal_predict,
    dal_solve,
    lambda_max,
)
from .features import FeatureMap, FeatureMapSpec
from .slda import fit_shrinkage_lda, lda_predict

__all__ = [
    "METHOD_CSP_LDA",
    "METHOD_DAL_GLR",
    "METHOD_DAL_DS",
    "METHOD_DAL_L1",
    "METHOD_TAGS",
    "METHOD_PRESETS",
    "LAMBDA_GRID_POINTS",
    "LAMBDA_GRID_SPAN",
    "CvPlan",
    "CvReport",
    "AnovaResult",
    "make_blockwise_folds",
    "misclassification_error",
    "lambda_grid",
    "sweep_lambda_path",
    "fit_dal_with_selection",
    "cross_validate_method",
    "rm_anova",
    "paired_ttest",
    "bonferroni_adjust",
]

METHOD_CSP_LDA = "CSP-LDA"
METHOD_DAL_GLR = "DAL-GLR"
METHOD_DAL_DS = "DAL-DS"
METHOD_DAL_L1 = "DAL-L1"
METHOD_TAGS = (METHOD_CSP_LDA, METHOD_DAL_GLR, METHOD_DAL_DS, METHOD_DAL_L1)

# solver preset backing each DAL method tag
METHOD_PRESETS = {
    METHOD_DAL_GLR: "GLR",
    METHOD_DAL_DS: "DS",
    METHOD_DAL_L1: "L1",
}

LAMBDA_GRID_POINTS = 20
LAMBDA_GRID_SPAN = 1e-3
CSP_PAIRS = 3

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CvPlan:
    """Outer cross-validation layout: contiguous blocks with a margin."""

    n_trials: int
    k_folds: int
    margin: int = 5

    def __post_init__(self):
        if self.n_trials < 1:
            raise ValueError(f"n_trials must be >= 1, got {self.n_trials}")
        if not 1 <= self.k_folds <= self.n_trials:
            raise ValueError(
                f"k_folds must lie in [1, {self.n_trials}], got {self.k_folds}"
            )
        if self.margin < 0:
            raise ValueError(f"margin must be >= 0, got {self.margin}")


@dataclass(frozen=True, eq=False)
class CvReport:
    """Per-fold errors plus their summary for one method on one session."""

    fold_errors: tuple
    mean_error: float
    std_error: float
    chosen_lambdas: tuple
    method: str


@dataclass(frozen=True)
class AnovaResult:
    f_stat: float
    df_effect: int
    df_error: int
    p_value: float


def make_blockwise_folds(n: int, k: int, margin: int) -> list:
    """Contiguous test blocks with a guard margin around each.

    Parameters
    ----------
    n : int
        Number of chronologically ordered trials.
    k : int
        Number of folds; the last test block absorbs any remainder.
    margin : int
        Trials excluded from training on each side of the test block.

    Returns
    -------
    list of (ndarray, ndarray)
        Per fold, (train_indices, test_indices) in chronological order.

    Raises
    ------
    ValueError
        If the margin leaves some fold without training trials.
    """
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    if margin < 0:
        raise ValueError(f"margin must be >= 0, got {margin}")
    size = n // k
    folds = []
    for j in range(k):
        start = j * size
        end = (j + 1) * size if j < k - 1 else n
        test = np.arange(start, end)
        train = np.concatenate(
            [np.arange(0, max(start - margin, 0)), np.arange(min(end + margin, n), n)]
        )
        if train.size == 0:
            raise ValueError(
                f"fold {j}: margin {margin} leaves no training trials for n={n}, k={k}"
            )
        folds.append((train, test))
    return folds


def misclassification_error(predicted, actual) -> float:
    """Fraction of label mismatches, in [0, 1]."""
    p = np.asarray(predicted)
    a = np.asarray(actual)
    if p.size == 0:
        raise ValueError("cannot score an empty prediction list")
    if p.shape != a.shape:
        raise ValueError(f"length mismatch: {p.size} predictions vs {a.size} labels")
    return float(np.mean(p != a))


def lambda_grid(lmax: float, points: int = LAMBDA_GRID_POINTS,
                span: float = LAMBDA_GRID_SPAN) -> np.ndarray:
    """Logarithmic grid from lmax down to span*lmax, strongest first."""
    if lmax <= 0:
        raise ValueError(f"lambda_max must be positive, got {lmax}")
    return np.geomspace(lmax, span * lmax, points)


def sweep_lambda_path(problem: DalProblem, grid, rel_gap_tol: float = 1e-3) -> list:
    """Solve along a descending lambda grid with warm starts.

    Each solve starts from the previous solution and reuses its final
    proximal step size, so the path costs a few outer iterations per point
    instead of a full ramp-up.
    """
    kind = problem.penalty_kind
    models = []
    model = None
    for lam in grid:
        if model is None:
            opts = SolverOptions(rel_gap_tol=rel_gap_tol)
        else:
            eta0 = min(max(model.convergence.final_eta, 1.0), 1e7)
            opts = SolverOptions(eta0=eta0, rel_gap_tol=rel_gap_tol)
        model = dal_solve(problem, RegularizerSpec(kind, float(lam)), opts,
                          warm_start=model)
        models.append(model)
    return models


def _csp_lda_fold_error(session, labels, train, test) -> float:
    model = fit_csp_from_session(session, m=CSP_PAIRS, trial_indices=train)
    xtr = np.stack([csp_features(model, session.trials[i].data) for i in train])
    lda = fit_shrinkage_lda(xtr, labels[train])
    xte = np.stack([csp_features(model, session.trials[i].data) for i in test])
    return misclassification_error(lda_predict(lda, xte), labels[test])


def fit_dal_with_selection(trials, preset: str, inner_k: int = 5, margin: int = 5):
    """Pick lambda by inner blockwise CV on ``trials`` and refit on all of them.

    The grid is anchored once on the full training set and shared by the
    inner folds, so the chosen lambda means the same thing at refit time.

    Returns
    -------
    (DalModel, FeatureMap, float)
        Refit model, the feature map fitted on all of ``trials``, and the
        selected lambda.
    """
    trials = list(trials)
    feat_kind = PRESET_BINDINGS[preset][0]
    spec = FeatureMapSpec(kind=feat_kind)

    fmap = FeatureMap(spec).fit(trials)
    problem = DalProblem(fmap.transform(trials), preset)
    grid = lambda_grid(lambda_max(problem))

    val_err = np.zeros(grid.size)
    inner_folds = make_blockwise_folds(len(trials), inner_k, margin)
    for itr, ival in inner_folds:
        inner_train = [trials[i] for i in itr]
        inner_val = [trials[i] for i in ival]
        imap = FeatureMap(spec).fit(inner_train)
        iproblem = DalProblem(imap.transform(inner_train), preset)
        val_feats = imap.transform(inner_val)
        val_labels = np.array([t.label for t in inner_val])
        models = sweep_lambda_path(iproblem, grid)
        bad = sum(1 for m in models if not m.convergence.converged)
        if bad:
            logger.debug("inner sweep: %d of %d solves not converged", bad, len(models))
        for gi, m in enumerate(models):
            val_err[gi] += misclassification_error(dal_predict(m, val_feats), val_labels)
    val_err /= len(inner_folds)

    # ties prefer the smallest lambda; the grid descends, so take the last
    best_idx = int(np.flatnonzero(val_err == val_err.min())[-1])
    lam_star = float(grid[best_idx])

    refit = sweep_lambda_path(problem, grid[: best_idx + 1])[-1]
    if not refit.convergence.converged:
        logger.warning(
            "refit at lambda=%.4e did not converge (relative gap %.2e); using best iterate",
            lam_star, refit.convergence.final_relative_gap,
        )
    return refit, fmap, lam_star


def _dal_fold(session, preset, train, test, inner_k, margin):
    """Nested selection and refit for one outer fold; returns (error, lambda)."""
    trials = session.trials
    refit, fmap, lam_star = fit_dal_with_selection(
        [trials[i] for i in train], preset, inner_k, margin,
    )
    test_feats = fmap.transform([trials[i] for i in test])
    test_labels = np.array([trials[i].label for i in test])
    error = misclassification_error(dal_predict(refit, test_feats), test_labels)
    return error, lam_star


def cross_validate_method(session, method: str, outer: CvPlan,
                          inner_k: int = 5) -> CvReport:
    """Estimate held-out error for one method with nested model selection.

    Parameters
    ----------
    session : Session
        Preprocessed session (filtering and resampling already applied).
    method : str
        One of METHOD_TAGS.
    outer : CvPlan
        Outer fold layout; its margin is reused for the inner splits.
    inner_k : int
        Inner folds for the lambda search (DAL methods only).

    Returns
    -------
    CvReport
        Fold errors, their mean and sample standard deviation, and the
        lambda chosen per outer fold (empty for CSP-LDA).
    """
    if method not in METHOD_TAGS:
        raise ValueError(f"unknown method {method!r}, expected one of {METHOD_TAGS}")
    n = len(session.trials)
    if outer.n_trials != n:
        raise ValueError(f"plan covers {outer.n_trials} trials, session has {n}")
    folds = make_blockwise_folds(n, outer.k_folds, outer.margin)
    labels = session.labels

    fold_errors = []
    chosen = []
    for train, test in folds:
        if method == METHOD_CSP_LDA:
            fold_errors.append(_csp_lda_fold_error(session, labels, train, test))
        else:
            error, lam = _dal_fold(session, METHOD_PRESETS[method], train, test,
                                   inner_k, outer.margin)
            fold_errors.append(error)
            chosen.append(lam)

    errs = np.asarray(fold_errors)
    return CvReport(
        fold_errors=tuple(float(e) for e in errs),
        mean_error=float(errs.mean()),
        std_error=float(errs.std(ddof=1)) if errs.size > 1 else 0.0,
        chosen_lambdas=tuple(chosen),
        method=method,
    )


def rm_anova(errors) -> AnovaResult:
    """One-way within-subjects ANOVA over a subjects x methods matrix.

    The total sum of squares splits into method, subject, and residual
    parts; F = MS_method / MS_error with (m-1, (m-1)(s-1)) degrees of
    freedom, and the p-value is the F tail probability expressed through
    the regularized incomplete beta function.
    """
    x = np.asarray(errors, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2 or x.shape[1] < 2:
        raise ValueError("need a 2-d matrix with >= 2 subjects and >= 2 methods")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite entry in the error matrix")
    s, m = x.shape
    grand = x.mean()
    ss_method = s * float(np.sum((x.mean(axis=0) - grand) ** 2))
    ss_subject = m * float(np.sum((x.mean(axis=1) - grand) ** 2))
    ss_total = float(np.sum((x - grand) ** 2))
    ss_error = max(ss_total - ss_method - ss_subject, 0.0)
    df_effect = m - 1
    df_error = (m - 1) * (s - 1)
    # sums of squares this small are indistinguishable from the rounding
    # noise of centering, so treat them as exact zeros
    eps = 100.0 * np.finfo(float).eps * max(float(np.max(np.abs(x))), 1e-300)
    tiny = x.size * eps * eps
    ms_error = ss_error / df_error
    if ss_error <= tiny:
        # a perfectly consistent effect has no residual to test against
        if ss_method <= tiny:
            return AnovaResult(0.0, df_effect, df_error, 1.0)
        return AnovaResult(float("inf"), df_effect, df_error, 0.0)
    f = (ss_method / df_effect) / ms_error
    p = float(betainc(0.5 * df_error, 0.5 * df_effect,
                      df_error / (df_error + df_effect * f)))
    return AnovaResult(float(f), int(df_effect), int(df_error), min(max(p, 0.0), 1.0))


def paired_ttest(a, b):
    """Two-sided paired t test.

    Returns
    -------
    (t, df, p) : (float, int, float)
        t statistic on the differences (sd with denominator n-1), its
        degrees of freedom, and the two-sided p-value via the incomplete
        beta function.  Identical inputs give t = 0, p = 1.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 1 or a.shape != b.shape:
        raise ValueError("paired samples must be equal-length vectors")
    n = a.size
    if n < 2:
        raise ValueError(f"need at least 2 pairs, got {n}")
    d = a - b
    df = n - 1
    sd = float(d.std(ddof=1))
    mean = float(d.mean())
    if sd == 0.0:
        if mean == 0.0:
            return 0.0, df, 1.0
        return float(np.sign(mean)) * float("inf"), df, 0.0
    t = mean / (sd / np.sqrt(n))
    p = float(betainc(0.5 * df, 0.5, df / (df + t * t)))
    return float(t), df, min(max(p, 0.0), 1.0)


def bonferroni_adjust(p_values, m: int) -> list:
    """Multiply each p-value by the comparison count m, clamped at 1."""
    ps = [float(p) for p in p_values]
    if m < len(ps):
        raise ValueError(f"m={m} is smaller than the {len(ps)} tests performed")
    for p in ps:
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"p-value outside [0, 1]: {p}")
    return [min(1.0, m * p) for p in ps]
