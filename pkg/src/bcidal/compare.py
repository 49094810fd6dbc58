"""Multi-method comparison over a dataset tree.

Walks ``subject_<id>/session_<k>`` directories, cross-validates every
method on every session behind the standard preprocessing chain, and
aggregates a per-subject table (mean +- sd over sessions, in percent) with
an average row, a repeated-measures ANOVA across methods, and
Bonferroni-adjusted paired t tests.  Reports are emitted twice: JSON for
machines, markdown for people; both are byte-deterministic for a given
dataset and configuration.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from itertools import combinations
from pathlib import Path

import numpy as np

from .dataset import SessionFormatError, list_session_dirs, load_session, validate_session
from .evalstats import (
    METHOD_TAGS,
    CvPlan,
    bonferroni_adjust,
    cross_validate_method,
    paired_ttest,
    rm_anova,
)
from .models import default_preprocessing
from .preprocessing import preprocess_session

__all__ = [
    "CompareConfig",
    "run_compare",
    "render_markdown",
    "write_reports",
    "format_percent",
]


@dataclass(frozen=True)
class CompareConfig:
    """Knobs of one comparison run."""

    methods: tuple = METHOD_TAGS
    outer_folds: int = 10
    inner_folds: int = 5
    margin: int = 5
    workers: int = 1

    def __post_init__(self):
        if not self.methods:
            raise ValueError("need at least one method")
        for m in self.methods:
            if m not in METHOD_TAGS:
                raise ValueError(f"unknown method {m!r}, expected one of {METHOD_TAGS}")
        if len(set(self.methods)) != len(self.methods):
            raise ValueError("duplicate method in the method list")
        if self.outer_folds < 2 or self.inner_folds < 2:
            raise ValueError("fold counts must be >= 2")
        if self.margin < 0:
            raise ValueError("margin must be >= 0")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


def format_percent(x: float) -> str:
    """One-decimal percentage, halves rounded away from zero."""
    return str(Decimal(repr(float(x))).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP))


def _session_work(item):
    """Cross-validate every configured method on one session directory.

    Top-level so a process pool can pickle it.  Returns a result record
    tagged either "ok" or "invalid"; load and validation problems become
    data, not exceptions, so one bad session cannot sink the run.
    """
    sid, k, path, config = item
    try:
        session = load_session(path)
        violations = validate_session(session)
        if violations:
            return {"subject": sid, "session": k, "status": "invalid",
                    "violations": violations}
        resample, bandpass = default_preprocessing(session.sampling_rate_hz)
        proc = preprocess_session(session, resample, bandpass)
    except (SessionFormatError, ValueError) as exc:
        return {"subject": sid, "session": k, "status": "invalid",
                "violations": [str(exc)]}

    plan = CvPlan(n_trials=len(proc.trials), k_folds=config.outer_folds,
                  margin=config.margin)
    methods = {}
    for method in config.methods:
        report = cross_validate_method(proc, method, plan,
                                       inner_k=config.inner_folds)
        methods[method] = {
            "fold_errors": list(report.fold_errors),
            "mean_error": report.mean_error,
            "std_error": report.std_error,
            "chosen_lambdas": list(report.chosen_lambdas),
        }
    return {"subject": sid, "session": k, "status": "ok",
            "input_rate_hz": session.sampling_rate_hz, "methods": methods}


def run_compare(dataset_root, config: CompareConfig | None = None) -> dict:
    """Cross-validate every method on every session and aggregate.

    Parameters
    ----------
    dataset_root : path
        Directory holding ``subject_<id>/session_<k>`` session directories.
    config : CompareConfig, optional

    Returns
    -------
    dict
        The full report payload: per-session results, failures, the
        per-subject percent table, the average row, and the statistics
        block (None when fewer than 2 subjects or methods survive).
        Serializes deterministically.
    """
    config = config or CompareConfig()
    entries = list_session_dirs(dataset_root)
    if not entries:
        raise SessionFormatError(
            f"no subject_<id>/session_<k> directories under {dataset_root}"
        )
    items = [(sid, k, path, config) for sid, k, path in entries]

    if config.workers > 1:
        # executor.map preserves submission order, so the reduction below
        # is identical to the sequential path
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_session_work, items))
    else:
        results = [_session_work(item) for item in items]

    sessions = [r for r in results if r["status"] == "ok"]
    failures = [{"subject": r["subject"], "session": r["session"],
                 "violations": r["violations"]}
                for r in results if r["status"] == "invalid"]

    per_subject = {}
    for r in sessions:
        per_subject.setdefault(r["subject"], []).append(r)

    subject_rows = []
    for sid in sorted(per_subject):
        rows = per_subject[sid]
        methods = {}
        for method in config.methods:
            errs = np.array([r["methods"][method]["mean_error"] for r in rows])
            methods[method] = {
                "mean_pct": float(errs.mean() * 100.0),
                "std_pct": float(errs.std(ddof=1) * 100.0) if errs.size > 1 else 0.0,
                "n_sessions": int(errs.size),
            }
        subject_rows.append({"subject": sid, "methods": methods})

    average = None
    if subject_rows:
        average = {}
        for method in config.methods:
            means = np.array([row["methods"][method]["mean_pct"]
                              for row in subject_rows])
            average[method] = {
                "mean_pct": float(means.mean()),
                "std_pct": float(means.std(ddof=1)) if means.size > 1 else 0.0,
            }

    stats = None
    if len(subject_rows) >= 2 and len(config.methods) >= 2:
        matrix = np.array([[row["methods"][m]["mean_pct"] / 100.0
                            for m in config.methods]
                           for row in subject_rows])
        anova = rm_anova(matrix)
        pairs = list(combinations(range(len(config.methods)), 2))
        raw = []
        pairwise = []
        for i, j in pairs:
            t, df, p = paired_ttest(matrix[:, i], matrix[:, j])
            raw.append(p)
            pairwise.append({"a": config.methods[i], "b": config.methods[j],
                             "t_stat": t, "df": df, "p_value": p})
        adjusted = bonferroni_adjust(raw, len(pairs))
        for entry, adj in zip(pairwise, adjusted):
            entry["p_adjusted"] = adj
        stats = {
            "rm_anova": {
                "f_stat": anova.f_stat,
                "df_effect": anova.df_effect,
                "df_error": anova.df_error,
                "p_value": anova.p_value,
            },
            "pairwise": pairwise,
            "m_comparisons": len(pairs),
        }

    return {
        "config": {
            "methods": list(config.methods),
            "outer_folds": config.outer_folds,
            "inner_folds": config.inner_folds,
            "margin": config.margin,
        },
        "preprocessing": {
            "bandpass_low_hz": 6.0,
            "bandpass_high_hz": 32.0,
            "processing_rate_hz": 128.0,
        },
        "sessions": sessions,
        "failures": failures,
        "subjects": subject_rows,
        "average": average,
        "stats": stats,
    }


def _cell(entry: dict, bold: bool) -> str:
    text = f"{format_percent(entry['mean_pct'])} ± {format_percent(entry['std_pct'])}"
    return f"**{text}**" if bold else text


def render_markdown(payload: dict) -> str:
    """Subjects-by-methods table plus a statistics appendix.

    Every number in the table is the corresponding JSON value rounded to
    one decimal, halves away from zero; the per-row minimum mean is bold.
    """
    methods = payload["config"]["methods"]
    lines = [
        "# Method comparison",
        "",
        "Misclassification error in percent, mean ± standard deviation "
        "over sessions.",
        "",
        "| Subject | " + " | ".join(methods) + " |",
        "| --- " * (len(methods) + 1) + "|",
    ]
    for row in payload["subjects"]:
        cells = row["methods"]
        best = min(cells[m]["mean_pct"] for m in methods)
        rendered = [_cell(cells[m], cells[m]["mean_pct"] == best) for m in methods]
        lines.append(f"| {row['subject']} | " + " | ".join(rendered) + " |")
    if payload["average"] is not None:
        avg = payload["average"]
        best = min(avg[m]["mean_pct"] for m in methods)
        rendered = [_cell(avg[m], avg[m]["mean_pct"] == best) for m in methods]
        lines.append("| Average | " + " | ".join(rendered) + " |")

    if payload["failures"]:
        lines += ["", "## Skipped sessions", ""]
        for f in payload["failures"]:
            first = f["violations"][0] if f["violations"] else "invalid"
            lines.append(
                f"- subject {f['subject']} session {f['session']}: {first}"
            )

    stats = payload["stats"]
    if stats is not None:
        a = stats["rm_anova"]
        lines += [
            "",
            "## Statistics",
            "",
            f"Repeated-measures ANOVA over methods: "
            f"F({a['df_effect']}, {a['df_error']}) = {a['f_stat']:.4g}, "
            f"p = {a['p_value']:.4g}.",
            "",
            f"Paired t tests, Bonferroni-adjusted for "
            f"{stats['m_comparisons']} comparisons:",
            "",
        ]
        for e in stats["pairwise"]:
            lines.append(
                f"- {e['a']} vs {e['b']}: t({e['df']}) = {e['t_stat']:.4g}, "
                f"p = {e['p_value']:.4g}, adjusted p = {e['p_adjusted']:.4g}"
            )
    return "\n".join(lines) + "\n"


def write_reports(payload: dict, prefix) -> tuple:
    """Write ``<prefix>.json`` and ``<prefix>.md``; returns the two paths."""
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    json_path = prefix.parent / (prefix.name + ".json")
    md_path = prefix.parent / (prefix.name + ".md")
    json_path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    md_path.write_text(render_markdown(payload))
    return json_path, md_path
