"""Trial feature blocks consumed by the matrix-regularized classifier.

Three kinds:

* ``second_order`` -- one channels x channels block, X X^T normalized to
  unit trace per trial (spatial power structure);
* ``first_order`` -- one channels x t_prime block of window-averaged raw
  samples (temporal envelope at coarse resolution);
* ``augmented`` -- both of the above, each divided by its training-set mean
  Frobenius norm and multiplied by a fixed per-block scale, so that a
  single matrix norm can act on their block-diagonal concatenation.

Only the augmented kind carries fitted state (the normalizers); fit it on
training trials and transform held-out trials with the same object.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "KIND_SECOND_ORDER",
    "KIND_FIRST_ORDER",
    "KIND_AUGMENTED",
    "FeatureMapSpec",
    "TrialFeature",
    "FeatureMap",
    "build_feature_blocks",
    "second_order_block",
    "first_order_block",
]

KIND_SECOND_ORDER = "second_order"
KIND_FIRST_ORDER = "first_order"
KIND_AUGMENTED = "augmented"
_KINDS = (KIND_SECOND_ORDER, KIND_FIRST_ORDER, KIND_AUGMENTED)


@dataclass(frozen=True)
class FeatureMapSpec:
    kind: str = KIND_SECOND_ORDER
    t_prime: int = 16
    block_scales: tuple = (1.0, 1.0)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown feature kind {self.kind!r}, expected one of {_KINDS}")
        if self.t_prime < 1:
            raise ValueError(f"t_prime must be >= 1, got {self.t_prime}")
        if len(self.block_scales) != 2 or any(s <= 0 for s in self.block_scales):
            raise ValueError(f"block_scales must be two positive numbers, got {self.block_scales}")
        object.__setattr__(self, "block_scales", tuple(float(s) for s in self.block_scales))


@dataclass(frozen=True, eq=False)
class TrialFeature:
    """Feature blocks of one trial plus its label."""

    blocks: tuple
    label: int

    def __post_init__(self):
        blocks = tuple(np.asarray(b, dtype=float) for b in self.blocks)
        if not blocks:
            raise ValueError("a trial feature needs at least one block")
        if self.label not in (1, -1):
            raise ValueError(f"label must be 1 or -1, got {self.label!r}")
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "label", int(self.label))


def second_order_block(data: np.ndarray) -> np.ndarray:
    """Unit-trace spatial covariance X X^T / trace(X X^T) of one trial."""
    x = np.asarray(data, dtype=float)
    cov = x @ x.T
    tr = np.trace(cov)
    if tr <= 0:
        raise ValueError("zero-energy trial, cannot trace-normalize")
    cov /= tr
    return 0.5 * (cov + cov.T)  # enforce exact symmetry against roundoff


def first_order_block(data: np.ndarray, t_prime: int) -> np.ndarray:
    """Per-channel means over t_prime contiguous windows, shape (C, t_prime).

    When the sample count is not divisible by t_prime the leading windows
    are one sample longer.
    """
    x = np.asarray(data, dtype=float)
    if x.shape[1] < t_prime:
        raise ValueError(f"t_prime={t_prime} exceeds sample count {x.shape[1]}")
    pieces = np.array_split(x, t_prime, axis=1)
    return np.stack([p.mean(axis=1) for p in pieces], axis=1)


class FeatureMap:
    """Builds TrialFeature lists; ``augmented`` learns Frobenius normalizers."""

    def __init__(self, spec: FeatureMapSpec):
        self.spec = spec
        self.normalizers_: tuple | None = None

    def _raw_blocks(self, data: np.ndarray) -> list:
        spec = self.spec
        if spec.kind == KIND_SECOND_ORDER:
            return [second_order_block(data)]
        if spec.kind == KIND_FIRST_ORDER:
            return [first_order_block(data, spec.t_prime)]
        return [first_order_block(data, spec.t_prime), second_order_block(data)]

    def fit(self, trials) -> "FeatureMap":
        """Record training statistics (mean Frobenius norm per block)."""
        trials = list(trials)
        if not trials:
            raise ValueError("cannot fit a feature map on zero trials")
        if self.spec.kind != KIND_AUGMENTED:
            self.normalizers_ = ()
            return self
        sums = None
        for trial in trials:
            blocks = self._raw_blocks(trial.data)
            norms = [np.linalg.norm(b) for b in blocks]
            sums = norms if sums is None else [a + b for a, b in zip(sums, norms)]
        normalizers = tuple(s / len(trials) for s in sums)
        if any(nz <= 0 for nz in normalizers):
            raise ValueError("a feature block has zero mean Frobenius norm on the training set")
        self.normalizers_ = normalizers
        return self

    def transform(self, trials) -> list:
        """Map trials to TrialFeature objects using the fitted state."""
        if self.normalizers_ is None:
            raise ValueError("feature map must be fit before transform")
        out = []
        for trial in trials:
            blocks = self._raw_blocks(trial.data)
            if self.spec.kind == KIND_AUGMENTED:
                blocks = [
                    b / nz * s
                    for b, nz, s in zip(blocks, self.normalizers_, self.spec.block_scales)
                ]
            out.append(TrialFeature(blocks=tuple(blocks), label=trial.label))
        return out

    def fit_transform(self, trials) -> list:
        trials = list(trials)
        return self.fit(trials).transform(trials)


def build_feature_blocks(session, spec: FeatureMapSpec) -> list:
    """One-shot fit+transform over a whole session's trials."""
    return FeatureMap(spec).fit_transform(session.trials)
