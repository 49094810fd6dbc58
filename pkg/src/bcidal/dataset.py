"""Trial/session data model and plain-text on-disk storage.

A session is an ordered list of pre-epoched trials, all sharing one channel
layout and sample count.  On disk a session is a directory holding

* ``session.json`` -- layout metadata,
* ``trials.csv`` -- long-format samples, header ``trial,channel,sample,value``,
  sorted by (trial, channel, sample),
* ``labels.csv`` -- header ``trial,label`` with labels in {1, -1}.

``save_session(load_session(d))`` reproduces the canonical files byte for
byte, which is what the storage round-trip tests pin down.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "Trial",
    "Session",
    "Dataset",
    "SessionFormatError",
    "load_session",
    "save_session",
    "validate_session",
    "load_dataset",
    "save_dataset",
    "list_session_dirs",
]

TRIALS_HEADER = "trial,channel,sample,value"
LABELS_HEADER = "trial,label"


class SessionFormatError(ValueError):
    """An on-disk session (or in-memory one being saved) violates the schema."""


@dataclass(frozen=True, eq=False)
class Trial:
    """One epoched trial.

    Parameters
    ----------
    data : ndarray, shape (n_channels, n_samples)
        Amplitudes in microvolts.
    label : int
        Class label, +1 or -1.
    index : int
        Chronological position of the trial within its session.
    """

    data: np.ndarray
    label: int
    index: int

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 2 or min(data.shape) < 1:
            raise ValueError(
                f"trial {self.index}: data must be 2-D channels x samples, "
                f"got shape {np.shape(self.data)}"
            )
        if self.label not in (1, -1):
            raise ValueError(f"trial {self.index}: label must be 1 or -1, got {self.label!r}")
        if not isinstance(self.index, (int, np.integer)) or self.index < 0:
            raise ValueError(f"trial index must be a non-negative integer, got {self.index!r}")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "label", int(self.label))
        object.__setattr__(self, "index", int(self.index))

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True, eq=False)
class Session:
    """An ordered collection of trials recorded at one sampling rate.

    Construction is intentionally light; `validate_session` performs the
    full invariant sweep so that malformed sessions can be inspected
    rather than being unrepresentable.
    """

    trials: tuple
    sampling_rate_hz: float
    channel_names: tuple

    def __post_init__(self):
        object.__setattr__(self, "trials", tuple(self.trials))
        object.__setattr__(self, "channel_names", tuple(str(c) for c in self.channel_names))
        object.__setattr__(self, "sampling_rate_hz", float(self.sampling_rate_hz))

    @property
    def n_trials(self) -> int:
        return len(self.trials)

    @property
    def n_channels(self) -> int:
        return len(self.channel_names)

    @property
    def n_samples(self) -> int:
        return self.trials[0].n_samples if self.trials else 0

    @property
    def labels(self) -> np.ndarray:
        return np.array([t.label for t in self.trials], dtype=int)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Map from subject id to that subject's ordered sessions."""

    subjects: dict

    def __post_init__(self):
        subjects = {int(k): list(v) for k, v in self.subjects.items()}
        object.__setattr__(self, "subjects", subjects)
        for sid, sessions in subjects.items():
            if not sessions:
                raise ValueError(f"subject {sid} has no sessions")

    @property
    def subject_ids(self) -> list:
        return sorted(self.subjects)


def validate_session(session: Session) -> list:
    """Return a list of human-readable invariant violations (empty if clean).

    Checks sampling rate, per-trial channel and sample counts against the
    layout, finiteness of every value, and contiguous 0-based trial indices.
    """
    violations = []
    if not np.isfinite(session.sampling_rate_hz) or session.sampling_rate_hz <= 0:
        violations.append(f"sampling rate must be positive, got {session.sampling_rate_hz}")
    if not session.channel_names:
        violations.append("channel name list is empty")
    if len(set(session.channel_names)) != len(session.channel_names):
        violations.append("channel names are not unique")
    if not session.trials:
        violations.append("session has no trials")
        return violations

    n_ch = len(session.channel_names)
    n_samp = session.trials[0].n_samples
    seen = set()
    for pos, trial in enumerate(session.trials):
        if trial.n_channels != n_ch:
            violations.append(
                f"trial {trial.index}: has {trial.n_channels} channels, layout declares {n_ch}"
            )
        if trial.n_samples != n_samp:
            violations.append(
                f"trial {trial.index}: has {trial.n_samples} samples, expected {n_samp}"
            )
        if not np.all(np.isfinite(trial.data)):
            bad = np.argwhere(~np.isfinite(trial.data))[0]
            violations.append(
                f"trial {trial.index}: non-finite value at channel {bad[0]}, sample {bad[1]}"
            )
        if trial.index in seen:
            violations.append(f"duplicate trial index {trial.index}")
        seen.add(trial.index)
        if trial.index != pos:
            violations.append(f"trial at position {pos} has index {trial.index}; "
                              "indices must be contiguous from 0 in order")
    return violations


def _format_value(x: float) -> str:
    # repr of a Python float: shortest decimal literal that round-trips
    return repr(float(x))


def save_session(session: Session, directory) -> None:
    """Write ``session.json``, ``trials.csv`` and ``labels.csv`` canonically."""
    violations = validate_session(session)
    if violations:
        raise SessionFormatError("; ".join(violations))
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    meta = {
        "sampling_rate_hz": session.sampling_rate_hz,
        "channel_names": list(session.channel_names),
        "n_trials": session.n_trials,
        "n_samples": session.n_samples,
    }
    (directory / "session.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )

    lines = [TRIALS_HEADER + "\n"]
    for trial in session.trials:
        t = trial.index
        for c in range(trial.n_channels):
            row = trial.data[c]
            lines.extend(
                f"{t},{c},{s},{_format_value(row[s])}\n" for s in range(row.shape[0])
            )
    (directory / "trials.csv").write_text("".join(lines), encoding="utf-8")

    label_lines = [LABELS_HEADER + "\n"]
    label_lines.extend(f"{trial.index},{trial.label}\n" for trial in session.trials)
    (directory / "labels.csv").write_text("".join(label_lines), encoding="utf-8")


def _read_header(path: Path, expected: str) -> None:
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline().strip()
    if first != expected:
        raise SessionFormatError(f"{path.name}: expected header {expected!r}, got {first!r}")


def load_session(directory) -> Session:
    """Load and fully validate a session directory.

    Raises
    ------
    SessionFormatError
        On missing files, malformed rows, channel/sample count mismatches,
        non-finite values, bad labels, or duplicate trial indices.
    """
    directory = Path(directory)
    meta_path = directory / "session.json"
    trials_path = directory / "trials.csv"
    labels_path = directory / "labels.csv"
    if not meta_path.exists():
        raise SessionFormatError(f"missing session file: {meta_path}")
    if not trials_path.exists():
        raise SessionFormatError(f"missing trials file: {trials_path}")
    if not labels_path.exists():
        raise SessionFormatError(f"missing labels file: {labels_path}")

    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SessionFormatError(f"session.json is not valid JSON: {exc}") from exc
    for key in ("sampling_rate_hz", "channel_names", "n_trials", "n_samples"):
        if key not in meta:
            raise SessionFormatError(f"session.json missing key {key!r}")
    n_trials = int(meta["n_trials"])
    n_samples = int(meta["n_samples"])
    channel_names = [str(c) for c in meta["channel_names"]]
    n_ch = len(channel_names)

    _read_header(trials_path, TRIALS_HEADER)
    try:
        raw = np.loadtxt(trials_path, delimiter=",", skiprows=1, dtype=float, ndmin=2)
    except ValueError as exc:
        raise SessionFormatError(f"trials.csv: malformed row ({exc})") from exc
    if raw.shape[1] != 4:
        raise SessionFormatError(f"trials.csv: expected 4 columns, got {raw.shape[1]}")

    rows_per_trial = n_ch * n_samples
    if raw.shape[0] != n_trials * rows_per_trial:
        counts = np.bincount(raw[:, 0].astype(int), minlength=n_trials)
        for t, count in enumerate(counts):
            if count != rows_per_trial:
                if count % n_samples == 0:
                    raise SessionFormatError(
                        f"trial {t} has {count // n_samples} channels "
                        f"while the layout declares {n_ch}"
                    )
                raise SessionFormatError(
                    f"trial {t}: expected {rows_per_trial} rows, found {count}"
                )
        raise SessionFormatError(
            f"trials.csv: expected {n_trials * rows_per_trial} data rows, got {raw.shape[0]}"
        )

    expect_t = np.repeat(np.arange(n_trials), rows_per_trial)
    expect_c = np.tile(np.repeat(np.arange(n_ch), n_samples), n_trials)
    expect_s = np.tile(np.arange(n_samples), n_trials * n_ch)
    idx_cols = raw[:, :3].astype(int)
    if not (np.array_equal(idx_cols[:, 0], expect_t)
            and np.array_equal(idx_cols[:, 1], expect_c)
            and np.array_equal(idx_cols[:, 2], expect_s)):
        bad = np.nonzero((idx_cols[:, 0] != expect_t)
                         | (idx_cols[:, 1] != expect_c)
                         | (idx_cols[:, 2] != expect_s))[0][0]
        raise SessionFormatError(
            f"trials.csv row {bad + 2}: expected (trial,channel,sample)="
            f"({expect_t[bad]},{expect_c[bad]},{expect_s[bad]}), found "
            f"({idx_cols[bad, 0]},{idx_cols[bad, 1]},{idx_cols[bad, 2]}); "
            "rows must be dense and sorted"
        )
    values = raw[:, 3].reshape(n_trials, n_ch, n_samples)
    if not np.all(np.isfinite(values)):
        t, c, s = np.argwhere(~np.isfinite(values))[0]
        raise SessionFormatError(f"trial {t}: non-finite value at channel {c}, sample {s}")

    _read_header(labels_path, LABELS_HEADER)
    try:
        lab_raw = np.loadtxt(labels_path, delimiter=",", skiprows=1, dtype=float, ndmin=2)
    except ValueError as exc:
        raise SessionFormatError(f"labels.csv: malformed row ({exc})") from exc
    if lab_raw.shape[1] != 2:
        raise SessionFormatError(f"labels.csv: expected 2 columns, got {lab_raw.shape[1]}")
    if lab_raw.shape[0] != n_trials:
        raise SessionFormatError(
            f"labels.csv: expected {n_trials} labels, got {lab_raw.shape[0]}"
        )
    lab_idx = lab_raw[:, 0].astype(int)
    labels = lab_raw[:, 1]
    if not np.array_equal(lab_idx, np.arange(n_trials)):
        raise SessionFormatError("labels.csv: trial indices must be 0..n_trials-1 in order")
    if not np.all(np.isin(labels, (1.0, -1.0))):
        bad = int(lab_idx[~np.isin(labels, (1.0, -1.0))][0])
        raise SessionFormatError(f"trial {bad}: label must be 1 or -1")

    trials = tuple(
        Trial(data=values[t], label=int(labels[t]), index=t) for t in range(n_trials)
    )
    session = Session(
        trials=trials,
        sampling_rate_hz=float(meta["sampling_rate_hz"]),
        channel_names=tuple(channel_names),
    )
    violations = validate_session(session)
    if violations:
        raise SessionFormatError("; ".join(violations))
    return session


_SUBJECT_RE = re.compile(r"^subject_(\d+)$")
_SESSION_RE = re.compile(r"^session_(\d+)$")


def save_dataset(dataset: Dataset, root) -> None:
    """Write ``subject_<id>/session_<k>/`` directories under ``root``."""
    root = Path(root)
    for sid in dataset.subject_ids:
        for k, session in enumerate(dataset.subjects[sid], start=1):
            save_session(session, root / f"subject_{sid}" / f"session_{k}")


def list_session_dirs(root) -> list:
    """Session directories under ``root`` as sorted (subject, session, path).

    Only names matching ``subject_<id>/session_<k>`` count; anything else
    is ignored so stray files cannot break a run.
    """
    root = Path(root)
    if not root.is_dir():
        raise SessionFormatError(f"dataset root is not a directory: {root}")
    found = []
    for sub_dir in root.iterdir():
        m = _SUBJECT_RE.match(sub_dir.name)
        if not m or not sub_dir.is_dir():
            continue
        sid = int(m.group(1))
        for ses_dir in sub_dir.iterdir():
            sm = _SESSION_RE.match(ses_dir.name)
            if sm and ses_dir.is_dir():
                found.append((sid, int(sm.group(1)), ses_dir))
    found.sort(key=lambda item: (item[0], item[1]))
    return found


def load_dataset(root) -> Dataset:
    """Load every ``subject_<id>/session_<k>`` directory under ``root``."""
    subjects = {}
    for sid, _, ses_dir in list_session_dirs(root):
        subjects.setdefault(sid, []).append(load_session(ses_dir))
    if not subjects:
        raise SessionFormatError(f"no subject_<id>/session_<k> directories under {root}")
    return Dataset(subjects=subjects)
