"""Proximal operators, norm values, and dual norms for the three penalties.

Every operator solves  argmin_W  kappa * Omega(W) + 0.5 ||W - V||_F^2  in
closed form:

* ``l1``         -- elementwise soft threshold;
* ``group_rows`` -- per-row Euclidean shrinkage (a zeroed row drops the
  corresponding channel entirely);
* ``trace``      -- soft threshold on singular values, shrinking rank.

The helpers at the bottom expose the (generalized) derivative of the
singular-value threshold, which the inner Newton iteration needs for
curvature information.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "REG_L1",
    "REG_GROUP_ROWS",
    "REG_TRACE",
    "prox_l1",
    "prox_group_rows",
    "prox_trace",
    "omega_value",
    "omega_dual",
]

REG_L1 = "l1"
REG_GROUP_ROWS = "group_rows"
REG_TRACE = "trace"
REG_KINDS = (REG_L1, REG_GROUP_ROWS, REG_TRACE)


def _check_kappa(kappa: float) -> float:
    if not np.isfinite(kappa) or kappa < 0:
        raise ValueError(f"threshold must be finite and >= 0, got {kappa}")
    return float(kappa)


def prox_l1(v: np.ndarray, kappa: float) -> np.ndarray:
    """Elementwise soft threshold: sign(v) * max(|v| - kappa, 0)."""
    kappa = _check_kappa(kappa)
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.maximum(np.abs(v) - kappa, 0.0)


def prox_group_rows(v: np.ndarray, kappa: float) -> np.ndarray:
    """Row-wise shrinkage: row r scaled by max(1 - kappa/||row r||, 0)."""
    kappa = _check_kappa(kappa)
    v = np.asarray(v, dtype=float)
    if v.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {v.shape}")
    norms = np.linalg.norm(v, axis=1)
    scale = np.zeros_like(norms)
    active = norms > kappa
    scale[active] = 1.0 - kappa / norms[active]
    return v * scale[:, None]


def prox_trace(v: np.ndarray, kappa: float) -> np.ndarray:
    """Singular-value soft threshold: U max(S - kappa, 0) W^T."""
    kappa = _check_kappa(kappa)
    v = np.asarray(v, dtype=float)
    if v.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {v.shape}")
    u, s, wt = np.linalg.svd(v, full_matrices=False)
    shrunk = np.maximum(s - kappa, 0.0)
    return (u * shrunk) @ wt


_PROX = {REG_L1: prox_l1, REG_GROUP_ROWS: prox_group_rows, REG_TRACE: prox_trace}


def prox_blocks(blocks, kind: str, kappa: float) -> list:
    """Apply the penalty's prox to each block (block-diagonal semantics)."""
    fn = _PROX[kind]
    return [fn(b, kappa) for b in blocks]


def omega_value(blocks, kind: str) -> float:
    """Penalty value summed over blocks."""
    total = 0.0
    for b in blocks:
        b = np.asarray(b, dtype=float)
        if kind == REG_L1:
            total += np.abs(b).sum()
        elif kind == REG_GROUP_ROWS:
            total += np.linalg.norm(b, axis=1).sum()
        elif kind == REG_TRACE:
            total += np.linalg.svd(b, compute_uv=False).sum()
        else:
            raise ValueError(f"unknown regularizer kind {kind!r}")
    return float(total)


def omega_dual(blocks, kind: str) -> float:
    """Dual norm: max over blocks of the blockwise dual norm.

    l1 -> max absolute entry; group_rows -> max row norm; trace -> spectral
    norm.  This is the tightest c with <U, W> <= c * Omega(W) for all W.
    """
    worst = 0.0
    for b in blocks:
        b = np.asarray(b, dtype=float)
        if kind == REG_L1:
            val = np.abs(b).max(initial=0.0)
        elif kind == REG_GROUP_ROWS:
            norms = np.linalg.norm(b, axis=1)
            val = norms.max(initial=0.0)
        elif kind == REG_TRACE:
            val = np.linalg.svd(b, compute_uv=False)[0] if b.size else 0.0
        else:
            raise ValueError(f"unknown regularizer kind {kind!r}")
        worst = max(worst, float(val))
    return worst


# ---------------------------------------------------------------------------
# Derivative machinery for the singular-value threshold.
#
# With the full SVD V = U diag(sigma) W^T and f(s) = max(s - kappa, 0)
# extended oddly, the derivative of P(V) = U f(Sigma) W^T in direction
# Delta is U [Gamma o Sym + Xi o Skew | rect] W^T, where Sym/Skew split the
# rotated square part of Delta and Gamma, Xi are divided-difference tables
# of f over sigma_i -+ sigma_j.  All coefficients lie in [0, 1], so the
# derivative is a contraction, as a prox derivative must be.
# ---------------------------------------------------------------------------


class TraceProxDerivative:
    """Precomputed SVD context for derivative-of-prox products at one V."""

    def __init__(self, v: np.ndarray, kappa: float):
        v = np.asarray(v, dtype=float)
        transposed = v.shape[0] > v.shape[1]
        if transposed:
            v = v.T
        u, s, wt = np.linalg.svd(v, full_matrices=True)
        self._setup(u, s, wt, kappa, transposed)

    @classmethod
    def from_svd(cls, u: np.ndarray, s: np.ndarray, wt: np.ndarray,
                 kappa: float, transposed: bool = False) -> "TraceProxDerivative":
        """Build from an existing full SVD of the already-oriented matrix.

        The caller promises u (m, m), s (m,), wt (p, p) with m <= p and
        that ``transposed`` records whether the original matrix was flipped
        to reach that orientation.  Lets one decomposition serve both the
        prox value and its derivative.
        """
        self = cls.__new__(cls)
        self._setup(u, s, wt, kappa, transposed)
        return self

    def _setup(self, u, s, wt, kappa, transposed):
        self.transposed = transposed
        m, p = u.shape[0], wt.shape[0]
        self.u = u          # (m, m)
        self.wt = wt        # (p, p)
        self.s = s          # (m,) since m <= p
        self.m, self.p = m, p

        f = np.maximum(s - kappa, 0.0)
        fprime = (s > kappa).astype(float)
        si, sj = s[:, None], s[None, :]
        diff = si - sj
        near = np.abs(diff) < 1e-12 * max(1.0, s[0] if s.size else 1.0)
        gamma = np.where(near, 0.0, (f[:, None] - f[None, :]) / np.where(near, 1.0, diff))
        gamma[near] = np.broadcast_to(fprime[:, None], gamma.shape)[near]
        ssum = si + sj
        pos = ssum > 1e-300
        xi = np.where(pos, (f[:, None] + f[None, :]) / np.where(pos, ssum, 1.0), 0.0)
        self.gamma = gamma
        self.xi = xi
        with np.errstate(divide="ignore", invalid="ignore"):
            rect = np.where(s > 1e-300, f / np.where(s > 1e-300, s, 1.0), 0.0)
        self.rect = rect    # (m,) scale for columns beyond the square part

    def rotate(self, delta: np.ndarray) -> np.ndarray:
        """U^T Delta W for a direction given in the original orientation."""
        if self.transposed:
            delta = delta.T
        return self.u.T @ delta @ self.wt.T

    def apply_rotated(self, a: np.ndarray) -> np.ndarray:
        """Derivative output, still in the rotated frame."""
        m = self.m
        sq = a[:, :m]
        sym = 0.5 * (sq + sq.T)
        skew = 0.5 * (sq - sq.T)
        out = np.empty_like(a)
        out[:, :m] = self.gamma * sym + self.xi * skew
        if self.p > m:
            out[:, m:] = self.rect[:, None] * a[:, m:]
        return out

    def apply(self, delta: np.ndarray) -> np.ndarray:
        """Full derivative-of-prox product D prox(V)[Delta]."""
        out = self.u @ self.apply_rotated(self.rotate(delta)) @ self.wt
        return out.T if self.transposed else out
