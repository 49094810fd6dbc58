"""Trained-model persistence and application.

A saved model is a JSON bundle carrying the classifier parameters together
with the preprocessing chain it was trained behind (input rate, resampling,
bandpass).  Applying a bundle to a session re-runs that chain, so a model
can never be silently evaluated on data prepared differently from its
training data.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .csp import CspModel, csp_features, fit_csp_from_session
from .dal import ConvergenceRecord, DalModel, RegularizerSpec, dal_predict, dal_scores
from .dataset import Session
from .evalstats import (
    CSP_PAIRS,
    METHOD_CSP_LDA,
    METHOD_PRESETS,
    METHOD_TAGS,
    fit_dal_with_selection,
)
from .features import FeatureMap, FeatureMapSpec
from .preprocessing import BandpassSpec, ResampleSpec, preprocess_session
from .slda import ShrinkageLdaModel, fit_shrinkage_lda, lda_predict

__all__ = [
    "FORMAT_NAME",
    "FORMAT_VERSION",
    "ModelBundle",
    "default_preprocessing",
    "train_model",
    "apply_model",
    "model_scores",
    "emit_model",
    "load_model",
]

FORMAT_NAME = "bcidal-model"
FORMAT_VERSION = 1


def default_preprocessing(input_rate_hz: float = 250.0):
    """Standard chain: resample to 128 Hz (if needed), then 6-32 Hz bandpass.

    Returns (resample, bandpass); resample is None when the input already
    runs at 128 Hz.
    """
    if input_rate_hz == 128.0:
        resample = None
    else:
        resample = ResampleSpec(from_hz=float(input_rate_hz), to_hz=128.0)
    return resample, BandpassSpec(sampling_rate_hz=128.0)


@dataclass(frozen=True, eq=False)
class ModelBundle:
    """One trained classifier plus the preprocessing it expects.

    Exactly one of the two parameter groups is populated: (csp, lda) for
    CSP-LDA, (dal, feature_spec, feature_normalizers) for the DAL methods.
    """

    method: str
    bandpass: BandpassSpec
    resample: ResampleSpec | None = None
    csp: CspModel | None = None
    lda: ShrinkageLdaModel | None = None
    dal: DalModel | None = None
    feature_spec: FeatureMapSpec | None = None
    feature_normalizers: tuple = ()

    def __post_init__(self):
        if self.method not in METHOD_TAGS:
            raise ValueError(f"unknown method tag {self.method!r}")
        if self.method == METHOD_CSP_LDA:
            if self.csp is None or self.lda is None:
                raise ValueError("CSP-LDA bundle needs csp and lda parameters")
        else:
            if self.dal is None or self.feature_spec is None:
                raise ValueError(f"{self.method} bundle needs dal and feature_spec")
        if self.resample is not None and self.resample.to_hz != self.bandpass.sampling_rate_hz:
            raise ValueError(
                f"bandpass rate {self.bandpass.sampling_rate_hz} Hz does not match "
                f"resampler output {self.resample.to_hz} Hz"
            )

    @property
    def input_rate_hz(self) -> float:
        """Sampling rate the bundle expects of raw input sessions."""
        if self.resample is not None:
            return self.resample.from_hz
        return self.bandpass.sampling_rate_hz


def train_model(session: Session, method: str,
                resample: ResampleSpec | None = None,
                bandpass: BandpassSpec | None = None,
                inner_k: int = 5, margin: int = 5) -> ModelBundle:
    """Preprocess a raw session and fit one method on all of its trials.

    DAL methods pick lambda by blockwise inner cross-validation on the
    whole session before the final refit.  When no preprocessing is given,
    the standard chain for the session's rate is used.
    """
    if method not in METHOD_TAGS:
        raise ValueError(f"unknown method tag {method!r}")
    if bandpass is None:
        resample, bandpass = default_preprocessing(session.sampling_rate_hz)
    proc = preprocess_session(session, resample, bandpass)

    if method == METHOD_CSP_LDA:
        csp = fit_csp_from_session(proc, m=CSP_PAIRS)
        feats = np.stack([csp_features(csp, t.data) for t in proc.trials])
        lda = fit_shrinkage_lda(feats, proc.labels)
        return ModelBundle(method=method, bandpass=bandpass, resample=resample,
                           csp=csp, lda=lda)

    refit, fmap, _ = fit_dal_with_selection(
        proc.trials, METHOD_PRESETS[method], inner_k=inner_k, margin=margin,
    )
    return ModelBundle(
        method=method, bandpass=bandpass, resample=resample, dal=refit,
        feature_spec=fmap.spec, feature_normalizers=tuple(fmap.normalizers_),
    )


def apply_model(bundle: ModelBundle, session: Session) -> np.ndarray:
    """Predict labels for every trial of a raw session.

    The session must be sampled at the rate the bundle was trained for;
    anything else is a preprocessing mismatch, not a unit conversion this
    layer should guess at.
    """
    if session.sampling_rate_hz != bundle.input_rate_hz:
        raise ValueError(
            f"preprocessing mismatch: session sampled at "
            f"{session.sampling_rate_hz} Hz but the model expects "
            f"{bundle.input_rate_hz} Hz"
        )
    proc = preprocess_session(session, bundle.resample, bundle.bandpass)
    if bundle.method == METHOD_CSP_LDA:
        feats = np.stack([csp_features(bundle.csp, t.data) for t in proc.trials])
        return lda_predict(bundle.lda, feats)
    fmap = FeatureMap(bundle.feature_spec)
    fmap.normalizers_ = tuple(bundle.feature_normalizers)
    return dal_predict(bundle.dal, fmap.transform(proc.trials))


def model_scores(bundle: ModelBundle, session: Session) -> np.ndarray:
    """Decision scores (sign gives the label) for every trial."""
    if session.sampling_rate_hz != bundle.input_rate_hz:
        raise ValueError(
            f"preprocessing mismatch: session sampled at "
            f"{session.sampling_rate_hz} Hz but the model expects "
            f"{bundle.input_rate_hz} Hz"
        )
    proc = preprocess_session(session, bundle.resample, bundle.bandpass)
    if bundle.method == METHOD_CSP_LDA:
        feats = np.stack([csp_features(bundle.csp, t.data) for t in proc.trials])
        return feats @ bundle.lda.weights + bundle.lda.bias
    fmap = FeatureMap(bundle.feature_spec)
    fmap.normalizers_ = tuple(bundle.feature_normalizers)
    return dal_scores(bundle.dal, fmap.transform(proc.trials))


# ---------------------------------------------------------------------------
# JSON layout.  Arrays become nested lists; floats rely on json's shortest
# round-trip repr, so save -> load -> save is byte-stable.
# ---------------------------------------------------------------------------


def _bundle_payload(bundle: ModelBundle) -> dict:
    payload = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "method": bundle.method,
        "preprocessing": {
            "input_rate_hz": bundle.input_rate_hz,
            "bandpass": {
                "sampling_rate_hz": bundle.bandpass.sampling_rate_hz,
                "low_hz": bundle.bandpass.low_hz,
                "high_hz": bundle.bandpass.high_hz,
                "prototype_order": bundle.bandpass.prototype_order,
            },
            "resample": None if bundle.resample is None else {
                "from_hz": bundle.resample.from_hz,
                "to_hz": bundle.resample.to_hz,
                "antialias_taps": bundle.resample.antialias_taps,
                "antialias_cutoff_fraction": bundle.resample.antialias_cutoff_fraction,
            },
        },
    }
    if bundle.method == METHOD_CSP_LDA:
        payload["csp"] = {
            "filters": bundle.csp.filters.tolist(),
            "patterns": bundle.csp.patterns.tolist(),
            "eigenvalues": bundle.csp.eigenvalues.tolist(),
        }
        payload["lda"] = {
            "weights": np.asarray(bundle.lda.weights).tolist(),
            "bias": bundle.lda.bias,
            "gamma": bundle.lda.gamma,
        }
    else:
        conv = bundle.dal.convergence
        payload["dal"] = {
            "weights": [np.asarray(w).tolist() for w in bundle.dal.weights],
            "bias": bundle.dal.bias,
            "regularizer": {
                "kind": bundle.dal.regularizer.kind,
                "lam": bundle.dal.regularizer.lam,
            },
            "convergence": {
                "outer_iterations": conv.outer_iterations,
                "final_relative_gap": conv.final_relative_gap,
                "objective": conv.objective,
                "converged": conv.converged,
                "objective_history": list(conv.objective_history),
                "final_eta": conv.final_eta,
            },
        }
        payload["features"] = {
            "kind": bundle.feature_spec.kind,
            "t_prime": bundle.feature_spec.t_prime,
            "block_scales": list(bundle.feature_spec.block_scales),
            "normalizers": list(bundle.feature_normalizers),
        }
    return payload


def emit_model(bundle: ModelBundle, path) -> None:
    """Write the bundle as deterministic JSON (sorted keys, 2-space indent)."""
    text = json.dumps(_bundle_payload(bundle), sort_keys=True, indent=2) + "\n"
    Path(path).write_text(text)


def load_model(path) -> ModelBundle:
    """Read a bundle back; errors name the offending tag or field."""
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"not a valid model file: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != FORMAT_NAME:
        raise ValueError(f"not a {FORMAT_NAME} file: {path}")
    if payload.get("version") != FORMAT_VERSION:
        raise ValueError(
            f"unsupported model version {payload.get('version')!r}, "
            f"expected {FORMAT_VERSION}"
        )
    method = payload.get("method")
    if method not in METHOD_TAGS:
        raise ValueError(f"unknown method tag {method!r}")

    try:
        pre = payload["preprocessing"]
        bp = pre["bandpass"]
        bandpass = BandpassSpec(
            sampling_rate_hz=float(bp["sampling_rate_hz"]),
            low_hz=float(bp["low_hz"]),
            high_hz=float(bp["high_hz"]),
            prototype_order=int(bp["prototype_order"]),
        )
        rs = pre["resample"]
        resample = None if rs is None else ResampleSpec(
            from_hz=float(rs["from_hz"]),
            to_hz=float(rs["to_hz"]),
            antialias_taps=int(rs["antialias_taps"]),
            antialias_cutoff_fraction=float(rs["antialias_cutoff_fraction"]),
        )
        if method == METHOD_CSP_LDA:
            csp = CspModel(
                filters=np.array(payload["csp"]["filters"], dtype=float),
                patterns=np.array(payload["csp"]["patterns"], dtype=float),
                eigenvalues=np.array(payload["csp"]["eigenvalues"], dtype=float),
            )
            lda = ShrinkageLdaModel(
                weights=np.array(payload["lda"]["weights"], dtype=float),
                bias=float(payload["lda"]["bias"]),
                gamma=float(payload["lda"]["gamma"]),
            )
            return ModelBundle(method=method, bandpass=bandpass,
                               resample=resample, csp=csp, lda=lda)
        dal = payload["dal"]
        conv = dal["convergence"]
        model = DalModel(
            weights=[np.array(w, dtype=float) for w in dal["weights"]],
            bias=float(dal["bias"]),
            regularizer=RegularizerSpec(
                kind=str(dal["regularizer"]["kind"]),
                lam=float(dal["regularizer"]["lam"]),
            ),
            convergence=ConvergenceRecord(
                outer_iterations=int(conv["outer_iterations"]),
                final_relative_gap=float(conv["final_relative_gap"]),
                objective=float(conv["objective"]),
                converged=bool(conv["converged"]),
                objective_history=tuple(conv["objective_history"]),
                final_eta=float(conv["final_eta"]),
            ),
        )
        feat = payload["features"]
        spec = FeatureMapSpec(
            kind=str(feat["kind"]),
            t_prime=int(feat["t_prime"]),
            block_scales=tuple(feat["block_scales"]),
        )
        return ModelBundle(
            method=method, bandpass=bandpass, resample=resample, dal=model,
            feature_spec=spec, feature_normalizers=tuple(feat["normalizers"]),
        )
    except (KeyError, TypeError) as exc:
        raise ValueError(f"model file violates the schema: missing or bad {exc}") from exc
