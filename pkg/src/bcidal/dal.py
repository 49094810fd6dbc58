"""Dual augmented Lagrangian solver for matrix-regularized logistic models.

The primal problem over blockwise weights W = (W_1, ..., W_K) and an
unpenalized bias b is

    min  (1/n) sum_i log(1 + exp(-y_i (<W, X_i> + b)))  +  lambda Omega(W)

with Omega one of the penalties in ``prox``.  Each outer step is a
proximal-point update

    W  <-  prox_{eta lambda Omega}(W + eta A^T alpha),

where the folded dual vector alpha in [0, 1]^n solves a smooth inner
problem by damped Newton under the class-balance constraint
sum_i alpha_i y_i = 0 (the constraint is how the free bias appears in the
dual).  The proximal step size eta grows geometrically, which is what
gives the method its fast tail convergence; iteration stops when the
relative duality gap certified by ``duality_gap`` drops below tolerance.

Presets bind a feature kind to its penalty: ``GLR`` puts row-group
shrinkage on a unit-trace covariance block (rows = channels), ``DS`` puts
one trace norm on the block-diagonal of the scaled first- and second-order
blocks, and ``L1`` puts an elementwise penalty on the windowed-mean block.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import expit, logit, xlogy

from . import prox as _prox
from .features import (
    KIND_AUGMENTED,
    KIND_FIRST_ORDER,
    KIND_SECOND_ORDER,
)
from .loss import dual_value, fit_bias, logistic_loss, logistic_loss_and_grad

__all__ = [
    "PRESET_GLR",
    "PRESET_DS",
    "PRESET_L1",
    "PRESET_BINDINGS",
    "RegularizerSpec",
    "SolverOptions",
    "ConvergenceRecord",
    "DalProblem",
    "DalModel",
    "GapResult",
    "lambda_max",
    "dal_solve",
    "duality_gap",
    "dal_predict",
]

PRESET_GLR = "GLR"
PRESET_DS = "DS"
PRESET_L1 = "L1"

# preset -> (feature kind, penalty kind)
PRESET_BINDINGS = {
    PRESET_GLR: (KIND_SECOND_ORDER, _prox.REG_GROUP_ROWS),
    PRESET_DS: (KIND_AUGMENTED, _prox.REG_TRACE),
    PRESET_L1: (KIND_FIRST_ORDER, _prox.REG_L1),
}

ETA_CAP = 1e8
LINESEARCH_BACKTRACK = 0.5
LINESEARCH_SLOPE = 1e-4
_ALPHA_FLOOR = 1e-12
# entry clip sits inside the floor so every coordinate keeps step room
_ALPHA_CLIP = 1e-10
# coordinates this close to a bound with an outward reduced gradient are
# frozen for the Newton step; the entropy barrier is too weak to keep the
# box inactive once eta is large
_ACTIVE_BAND = 1e-8


@dataclass(frozen=True)
class RegularizerSpec:
    """Penalty kind plus its strength lambda (attribute ``lam``)."""

    kind: str
    lam: float

    def __post_init__(self):
        if self.kind not in _prox.REG_KINDS:
            raise ValueError(f"unknown regularizer kind {self.kind!r}")
        if not (self.lam > 0 and np.isfinite(self.lam)):
            raise ValueError(f"lambda must be finite and > 0, got {self.lam}")


@dataclass(frozen=True)
class SolverOptions:
    eta0: float = 1.0
    eta_growth: float = 2.0
    rel_gap_tol: float = 1e-3
    max_outer: int = 100
    inner_tol: float = 1e-9
    inner_max_newton: int = 50

    def __post_init__(self):
        if self.eta0 <= 0 or self.eta_growth < 1.0:
            raise ValueError("eta0 must be > 0 and eta_growth >= 1")
        if self.rel_gap_tol <= 0 or self.inner_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_outer < 1 or self.inner_max_newton < 1:
            raise ValueError("iteration caps must be >= 1")


@dataclass(frozen=True)
class ConvergenceRecord:
    outer_iterations: int
    final_relative_gap: float
    objective: float
    converged: bool
    objective_history: tuple
    # proximal step size of the last accepted outer step; a continuation
    # sweep can pass it back through SolverOptions.eta0 to skip the ramp-up
    final_eta: float = 1.0


@dataclass(frozen=True, eq=False)
class GapResult:
    gap: float
    raw_gap: float
    primal: float
    dual: float


@dataclass(eq=False)
class DalProblem:
    """Feature blocks, labels, and the flattened design used by the solver."""

    features: list
    preset: str

    def __post_init__(self):
        if self.preset not in PRESET_BINDINGS:
            raise ValueError(f"unknown preset {self.preset!r}")
        feats = list(self.features)
        if len(feats) < 4:
            raise ValueError(f"need at least 4 trials, got {len(feats)}")
        shapes = [np.shape(b) for b in feats[0].blocks]
        for i, f in enumerate(feats):
            if [np.shape(b) for b in f.blocks] != shapes:
                raise ValueError(f"trial {i}: block shapes differ from trial 0")
            for b in f.blocks:
                if not np.all(np.isfinite(b)):
                    raise ValueError(f"trial {i}: non-finite feature value")
        y = np.array([f.label for f in feats], dtype=float)
        if not (np.any(y > 0) and np.any(y < 0)):
            raise ValueError("both classes must be present")
        self.features = feats
        self.labels = y
        self.block_shapes = shapes
        sizes = [int(np.prod(s)) for s in shapes]
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        self.block_slices = [slice(int(a), int(b)) for a, b in zip(offsets[:-1], offsets[1:])]
        self.design = np.stack(
            [np.concatenate([np.asarray(b, dtype=float).ravel() for b in f.blocks])
             for f in feats]
        )

    @property
    def n_trials(self) -> int:
        return len(self.features)

    @property
    def penalty_kind(self) -> str:
        return PRESET_BINDINGS[self.preset][1]

    @property
    def design_blocks(self) -> list:
        """Per-block (n, rows, cols) views of the flattened design."""
        views = getattr(self, "_design_blocks", None)
        if views is None:
            n = self.design.shape[0]
            views = [
                self.design[:, sl].reshape(n, *shape)
                for sl, shape in zip(self.block_slices, self.block_shapes)
            ]
            self._design_blocks = views
        return views

    def split(self, vec: np.ndarray) -> list:
        return [vec[sl].reshape(shape) for sl, shape in zip(self.block_slices, self.block_shapes)]

    def join(self, blocks) -> np.ndarray:
        return np.concatenate([np.asarray(b, dtype=float).ravel() for b in blocks])

    def zero_weights(self) -> list:
        return [np.zeros(s) for s in self.block_shapes]


@dataclass(frozen=True, eq=False)
class DalModel:
    weights: list
    bias: float
    regularizer: RegularizerSpec
    convergence: ConvergenceRecord


def _balanced_alpha(y: np.ndarray) -> np.ndarray:
    """Feasible center of the dual box: 0.5 for balanced labels, otherwise
    per-class values chosen so that sum_i alpha_i y_i = 0 exactly."""
    n = y.size
    npos = int(np.sum(y > 0))
    return np.where(y > 0, (n - npos) / n, npos / n)


def _rebalanced(alpha: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Scale one class's alphas down so sum_i alpha_i y_i = 0 without
    leaving [0, 1]."""
    out = np.clip(alpha, 0.0, 1.0)
    s_pos = float(out[y > 0].sum())
    s_neg = float(out[y < 0].sum())
    if s_pos > s_neg and s_pos > 0:
        out = np.where(y > 0, out * (s_neg / s_pos), out)
    elif s_neg > s_pos and s_neg > 0:
        out = np.where(y < 0, out * (s_pos / s_neg), out)
    return out


def duality_gap(weights, bias: float, alpha: np.ndarray,
                problem: DalProblem, reg: RegularizerSpec) -> GapResult:
    """Certified primal-dual gap at (weights, bias) with candidate alpha.

    The candidate is made dual-feasible by scaling one class so the
    balance constraint sum_i alpha_i y_i = 0 holds exactly, then scaling
    everything down so the dual norm of (1/n) sum_i alpha_i y_i X_i stays
    within lambda.  Both operations keep alpha inside [0, 1], so the
    entropy value is a true lower bound; the returned gap is clamped at 0
    with the raw difference preserved.
    """
    alpha = np.asarray(alpha, dtype=float)
    if np.any(alpha < 0.0) or np.any(alpha > 1.0):
        raise ValueError("alpha must lie in [0, 1]")
    y = problem.labels
    n = y.size
    kind = reg.kind
    wvec = problem.join(weights)
    scores = problem.design @ wvec + bias
    primal = logistic_loss(scores, y) + reg.lam * _prox.omega_value(weights, kind)

    at = _rebalanced(alpha, y)
    u = problem.design.T @ (at * y) / n
    dn = _prox.omega_dual(problem.split(u), kind)
    if dn > reg.lam:
        at = at * (reg.lam / dn)
    dual = dual_value(at)
    raw = primal - dual
    return GapResult(gap=max(raw, 0.0), raw_gap=raw, primal=primal, dual=dual)


def lambda_max(problem: DalProblem) -> float:
    """Smallest lambda at which the all-zero weights are optimal.

    Equals the dual norm of the loss gradient at W = 0 with the bias at
    its null-model optimum (the log class ratio).
    """
    y = problem.labels
    n = y.size
    npos = int(np.sum(y > 0))
    b = math.log(npos / (n - npos))
    alpha0 = expit(-y * b)
    u = problem.design.T @ (alpha0 * y) / n
    val = _prox.omega_dual(problem.split(u), problem.penalty_kind)
    if val <= 0:
        raise ValueError("lambda_max is zero: features carry no gradient at the null model")
    return float(val)


# ---------------------------------------------------------------------------
# Inner problem: phi(alpha) = (1/n) sum_i [a log a + (1-a) log(1-a)]
#                           + (1/(2 eta)) || prox_{eta lambda Omega}(W_t + eta u(alpha)) ||^2
# minimized over the box subject to y^T alpha = 0, with
# u(alpha) = (1/n) sum_i alpha_i y_i X_i.  The gradient involves only the
# prox output; the Hessian needs the prox derivative, assembled below as
# the Gram matrix G_ij = <X_i, Dprox[X_j]>.
# ---------------------------------------------------------------------------


def _prox_vec(v: np.ndarray, kind: str, kappa: float, problem: DalProblem) -> np.ndarray:
    return problem.join(_prox.prox_blocks(problem.split(v), kind, kappa))


def _trace_state(problem: DalProblem, v: np.ndarray, kappa: float):
    """Singular value thresholding with the per-block SVDs kept for reuse.

    Returns the prox output plus one (u, s, wt, transposed) tuple per
    block so the Hessian assembly can skip its own decomposition of the
    same point.
    """
    blocks = []
    svds = []
    for sl, shape in zip(problem.block_slices, problem.block_shapes):
        vb = v[sl].reshape(shape)
        transposed = vb.shape[0] > vb.shape[1]
        if transposed:
            vb = vb.T
        u, s, wt = np.linalg.svd(vb, full_matrices=True)
        pb = (u * np.maximum(s - kappa, 0.0)) @ wt[: u.shape[0]]
        blocks.append(pb.T if transposed else pb)
        svds.append((u, s, wt, transposed))
    return problem.join(blocks), svds


def _jac_gram(problem: DalProblem, v: np.ndarray, kind: str, kappa: float,
              svds: list | None = None) -> np.ndarray:
    """G_ij = <X_i, Dprox_{kappa Omega}(V)[X_j]> summed over blocks.

    Assembled as one Gram product per block: the prox derivative is
    symmetric PSD with a low-dimensional structure, so G = B B^T for an
    explicit factor B in each case.
    """
    n = problem.n_trials
    g = np.zeros((n, n))
    for bi, (sl, shape, d3) in enumerate(zip(problem.block_slices,
                                             problem.block_shapes,
                                             problem.design_blocks)):
        vb = v[sl].reshape(shape)
        db = problem.design[:, sl]
        if kind == _prox.REG_L1:
            mask = (np.abs(vb) > kappa).ravel()
            if mask.any():
                sub = db[:, mask]
                g += sub @ sub.T
        elif kind == _prox.REG_GROUP_ROWS:
            sq = np.einsum("rt,rt->r", vb, vb)
            norms = np.sqrt(sq)
            active = norms > kappa
            if active.any():
                d3a = d3[:, active, :]
                na = norms[active]
                scale = 1.0 - kappa / na
                b1 = (d3a * np.sqrt(scale)[None, :, None]).reshape(n, -1)
                g += b1 @ b1.T
                vhat = vb[active] / na[:, None]
                proj = np.einsum("irt,rt->ir", d3a, vhat)
                b2 = proj * np.sqrt(kappa / na)[None, :]
                g += b2 @ b2.T
        elif kind == _prox.REG_TRACE:
            if svds is None:
                ctx = _prox.TraceProxDerivative(vb, kappa)
            else:
                ub, sb, wtb, tr = svds[bi]
                ctx = _prox.TraceProxDerivative.from_svd(ub, sb, wtb, kappa, tr)
            if ctx.transposed:
                d3 = np.transpose(d3, (0, 2, 1))
            a = ctx.u.T[None] @ d3 @ ctx.wt.T[None]
            m = ctx.m
            sq = a[:, :, :m]
            sym = 0.5 * (sq + np.transpose(sq, (0, 2, 1)))
            skew = sq - sym
            out = np.empty_like(a)
            out[:, :, :m] = ctx.gamma[None] * sym + ctx.xi[None] * skew
            if ctx.p > m:
                out[:, :, m:] = ctx.rect[None, :, None] * a[:, :, m:]
            g += a.reshape(n, -1) @ out.reshape(n, -1).T
        else:  # pragma: no cover
            raise ValueError(f"unknown regularizer kind {kind!r}")
    return 0.5 * (g + g.T)


def _inner_newton(problem: DalProblem, reg: RegularizerSpec, center: np.ndarray,
                  eta: float, alpha: np.ndarray, options: SolverOptions,
                  tol: float) -> np.ndarray:
    y = problem.labels
    n = y.size
    design = problem.design
    kappa = eta * reg.lam
    kind = reg.kind
    yy = np.outer(y, y)
    diag = np.diag_indices(n)

    trace = kind == _prox.REG_TRACE

    def phi_at(a, v):
        if trace:
            p, svds = _trace_state(problem, v, kappa)
        else:
            p, svds = _prox_vec(v, kind, kappa, problem), None
        ent = float(np.sum(xlogy(a, a) + xlogy(1.0 - a, 1.0 - a))) / n
        return p, ent + 0.5 / eta * float(p @ p), svds

    alpha = np.clip(alpha, _ALPHA_CLIP, 1.0 - _ALPHA_CLIP)
    v = center + eta * (design.T @ (alpha * y) / n)
    p, phi, svds = phi_at(alpha, v)
    for _ in range(options.inner_max_newton):
        grad = (logit(alpha) + y * (design @ p)) / n
        r = grad - (float(y @ grad) / n) * y
        pinned_lo = (alpha - _ALPHA_FLOOR <= _ACTIVE_BAND) & (r > 0.0)
        pinned_hi = (1.0 - _ALPHA_FLOOR - alpha <= _ACTIVE_BAND) & (r < 0.0)
        idx = np.flatnonzero(~(pinned_lo | pinned_hi))
        nf = idx.size
        if nf == 0 or np.linalg.norm(r[idx]) <= tol:
            break

        h = _jac_gram(problem, v, kind, kappa, svds)
        h *= yy
        h *= eta / n**2
        h[diag] += 1.0 / (alpha * (1.0 - alpha)) / n
        hf = h[np.ix_(idx, idx)] if nf < n else h
        direction = np.zeros(n)
        yf = y[idx]
        try:
            # reduced Hessian is SPD, so the bordered system splits into
            # two triangular solves: d = -H^-1 (g + mu y), mu from y^T d = 0
            chol = cho_factor(hf, lower=True, check_finite=False)
            z = cho_solve(chol, np.column_stack([grad[idx], yf]),
                          check_finite=False)
            mu = -float(yf @ z[:, 0]) / float(yf @ z[:, 1])
            direction[idx] = -(z[:, 0] + mu * z[:, 1])
        except np.linalg.LinAlgError:
            rf = grad[idx] - (float(yf @ grad[idx]) / nf) * yf
            direction[idx] = -rf
        slope = float(grad @ direction)
        if slope >= 0.0:
            rf = grad[idx] - (float(yf @ grad[idx]) / nf) * yf
            direction[:] = 0.0
            direction[idx] = -rf
            slope = float(grad @ direction)
            if slope >= 0.0:
                break

        with np.errstate(divide="ignore"):
            up = direction > 0
            dn = direction < 0
            t_bound = np.inf
            if up.any():
                t_bound = min(t_bound, np.min((1.0 - _ALPHA_FLOOR - alpha[up]) / direction[up]))
            if dn.any():
                t_bound = min(t_bound, np.min((_ALPHA_FLOOR - alpha[dn]) / direction[dn]))
        if not t_bound > 0.0:
            break
        t = min(1.0, 0.999 * t_bound)
        # v is affine along the step, so trial points need no design product
        v_dir = eta * (design.T @ (direction * y) / n)
        accepted = False
        for _ in range(60):
            cand = alpha + t * direction
            v_c = v + t * v_dir
            p_c, phi_c, svds_c = phi_at(cand, v_c)
            if phi_c <= phi + LINESEARCH_SLOPE * t * slope:
                alpha, v, p, phi, svds = cand, v_c, p_c, phi_c, svds_c
                accepted = True
                break
            # quadratic fit through phi(0), phi'(0), phi(t), safeguarded
            denom = phi_c - phi - slope * t
            if denom > 0.0:
                t = float(min(max(-0.5 * slope * t * t / denom, 0.1 * t), 0.5 * t))
            else:
                t *= LINESEARCH_BACKTRACK
        if not accepted or t < 1e-12:
            break
    return alpha


def dal_solve(problem: DalProblem, reg: RegularizerSpec,
              options: SolverOptions | None = None,
              warm_start: DalModel | None = None) -> DalModel:
    """Run the outer proximal-point loop to the requested relative gap.

    Parameters
    ----------
    problem : DalProblem
    reg : RegularizerSpec
        Its kind must match the problem preset's bound penalty.
    options : SolverOptions, optional
    warm_start : DalModel, optional
        Initializes weights and bias (used when sweeping a lambda grid).

    Returns
    -------
    DalModel
        Weights, bias, and a convergence record whose objective history is
        the primal value at every outer iterate.  If the iteration cap is
        hit, the best iterate seen is returned with ``converged=False``.
    """
    options = options or SolverOptions()
    expected_kind = problem.penalty_kind
    if reg.kind != expected_kind:
        raise ValueError(
            f"preset {problem.preset} binds penalty {expected_kind!r}, got {reg.kind!r}"
        )
    y = problem.labels
    design = problem.design

    if warm_start is not None:
        wvec = problem.join(warm_start.weights)
        bias = fit_bias(design @ wvec, y, b0=warm_start.bias)
    else:
        wvec = np.zeros(design.shape[1])
        bias = fit_bias(np.zeros(y.size), y)
    alpha = _balanced_alpha(y)

    eta = options.eta0
    eta_floor = min(1.0, options.eta0)
    eta_accepted = options.eta0
    history = []
    best = (np.inf, wvec, bias)
    rel_gap = np.inf
    converged = False
    outer_done = 0
    for outer in range(options.max_outer + 1):
        scores = design @ wvec + bias
        cand = expit(-y * scores)  # loss-gradient dual candidate; balanced b makes it feasible
        res = duality_gap(problem.split(wvec), bias, cand, problem, reg)
        history.append(res.primal)
        if res.primal < best[0]:
            best = (res.primal, wvec.copy(), bias)
        rel_gap = res.gap / max(abs(res.primal), 1e-300)
        if rel_gap <= options.rel_gap_tol:
            converged = True
            break
        if outer == options.max_outer:
            break

        alpha = _rebalanced(alpha, y)
        # early outers need only a coarse inner solve; tighten with the gap
        inner_tol = max(options.inner_tol, min(1e-4, 0.05 * rel_gap))
        alpha_new = _inner_newton(problem, reg, wvec, eta, alpha, options,
                                  inner_tol)
        u = design.T @ (alpha_new * y) / y.size
        wcand = _prox_vec(wvec + eta * u, reg.kind, eta * reg.lam, problem)
        bcand = fit_bias(design @ wcand, y, b0=bias)
        cand_primal = logistic_loss(design @ wcand + bcand, y) \
            + reg.lam * _prox.omega_value(problem.split(wcand), reg.kind)
        slack = max(1e-10 * abs(res.primal), 1e-14)
        if cand_primal <= res.primal + slack:
            wvec, bias, alpha = wcand, bcand, alpha_new
            eta_accepted = eta
            eta = min(eta * options.eta_growth, ETA_CAP)
        else:
            # inner solve was too inexact at this step size; retry colder
            eta = max(eta / 8.0, eta_floor)
            alpha = _balanced_alpha(y)
        outer_done += 1

    if not converged:
        wvec, bias = best[1], best[2]
        scores = design @ wvec + bias
        cand = expit(-y * scores)
        res = duality_gap(problem.split(wvec), bias, cand, problem, reg)
        rel_gap = res.gap / max(abs(res.primal), 1e-300)

    record = ConvergenceRecord(
        outer_iterations=outer_done,
        final_relative_gap=float(rel_gap),
        objective=float(history[-1] if converged else best[0]),
        converged=converged,
        objective_history=tuple(history),
        final_eta=float(eta_accepted),
    )
    return DalModel(weights=problem.split(wvec), bias=float(bias),
                    regularizer=reg, convergence=record)


def dal_predict(model: DalModel, features) -> np.ndarray:
    """Labels (+1 on ties) from sum_k <W_k, X_k> + b per trial feature."""
    scores = dal_scores(model, features)
    return np.where(scores >= 0.0, 1, -1)


def dal_scores(model: DalModel, features) -> np.ndarray:
    scores = []
    for f in features:
        s = sum(float(np.sum(w * b)) for w, b in zip(model.weights, f.blocks))
        scores.append(s + model.bias)
    return np.asarray(scores)
