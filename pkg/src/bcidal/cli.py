"""Command-line surface: synth, train, predict, cv, compare, stats.

Every subcommand accepts ``--config FILE`` with a flat JSON object whose
keys mirror the long option names (underscored); explicit flags win over
config values, which win over built-in defaults.  Exit codes: 0 success,
1 usage or configuration error, 2 data validation error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .compare import CompareConfig, format_percent, run_compare, write_reports
from .dataset import SessionFormatError, load_session, validate_session
from .evalstats import (
    METHOD_TAGS,
    CvPlan,
    bonferroni_adjust,
    cross_validate_method,
    paired_ttest,
    rm_anova,
)
from .models import (
    apply_model,
    default_preprocessing,
    emit_model,
    load_model,
    train_model,
)
from .preprocessing import preprocess_session
from .synth import SynthSpec, generate_session, save_synth_session

__all__ = ["main", "EXIT_OK", "EXIT_USAGE", "EXIT_DATA", "EXIT_NUMERICAL"]

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3

# CLI spelling -> internal method tag
CLI_METHODS = {
    "csp-lda": "CSP-LDA",
    "dal-glr": "DAL-GLR",
    "dal-ds": "DAL-DS",
    "dal-l1": "DAL-L1",
}


class _Exit(Exception):
    """Carries an exit code and a message for the top-level handler."""

    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; the contract here says 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="bcidal",
                     description="Motor-imagery EEG decoding pipeline.")
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="-v for progress, -vv for solver detail")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", metavar="FILE",
                       help="JSON file with defaults for this command's options")
        return p

    p = add("synth", "generate a synthetic dataset tree")
    p.add_argument("--out", metavar="DIR")
    p.add_argument("--subjects", type=int)
    p.add_argument("--sessions", type=int)
    p.add_argument("--trials-per-class", type=int, dest="trials_per_class")
    p.add_argument("--erd-depth", type=float, dest="erd_depth")
    p.add_argument("--seed", type=int)

    p = add("train", "fit one method on a whole session")
    p.add_argument("--session", metavar="DIR")
    p.add_argument("--method", metavar="TAG")
    p.add_argument("--out", metavar="FILE")
    p.add_argument("--inner-folds", type=int, dest="inner_folds")
    p.add_argument("--margin", type=int)

    p = add("predict", "apply a saved model to a session")
    p.add_argument("--model", metavar="FILE")
    p.add_argument("--session", metavar="DIR")
    p.add_argument("--out", metavar="FILE", help="labels CSV (default: stdout)")

    p = add("cv", "cross-validate one method on one session")
    p.add_argument("--session", metavar="DIR")
    p.add_argument("--method", metavar="TAG")
    p.add_argument("--outer-folds", type=int, dest="outer_folds")
    p.add_argument("--inner-folds", type=int, dest="inner_folds")
    p.add_argument("--margin", type=int)
    p.add_argument("--report", metavar="FILE")

    p = add("compare", "cross-validate every method over a dataset tree")
    p.add_argument("--dataset", metavar="DIR")
    p.add_argument("--methods", metavar="TAGS", help="comma-separated CLI tags")
    p.add_argument("--report-prefix", metavar="PATH", dest="report_prefix")
    p.add_argument("--outer-folds", type=int, dest="outer_folds")
    p.add_argument("--inner-folds", type=int, dest="inner_folds")
    p.add_argument("--margin", type=int)
    p.add_argument("--workers", type=int)

    p = add("stats", "ANOVA and pairwise tests from a compare JSON report")
    p.add_argument("--report", metavar="FILE")

    return parser


_DEFAULTS = {
    "synth": {"subjects": 7, "sessions": 5, "trials_per_class": 30,
              "erd_depth": 0.5, "seed": 1},
    "train": {"inner_folds": 5, "margin": 5},
    "predict": {"out": None},
    "cv": {"outer_folds": 10, "inner_folds": 5, "margin": 5, "report": None},
    "compare": {"methods": "csp-lda,dal-glr,dal-ds,dal-l1", "outer_folds": 10,
                "inner_folds": 5, "margin": 5, "workers": 1},
    "stats": {},
}

_REQUIRED = {
    "synth": ("out",),
    "train": ("session", "method", "out"),
    "predict": ("model", "session"),
    "cv": ("session", "method"),
    "compare": ("dataset", "report_prefix"),
    "stats": ("report",),
}


def _merge_config(ns: argparse.Namespace) -> dict:
    """Defaults < config file < explicit flags, then required-field check."""
    merged = dict(_DEFAULTS[ns.command])
    if ns.config is not None:
        try:
            loaded = json.loads(Path(ns.config).read_text())
        except OSError as exc:
            raise _Exit(EXIT_USAGE, f"cannot read config: {exc}")
        except json.JSONDecodeError as exc:
            raise _Exit(EXIT_USAGE, f"config is not valid JSON: {exc}")
        if not isinstance(loaded, dict):
            raise _Exit(EXIT_USAGE, "config must be a JSON object")
        known = set(merged) | set(_REQUIRED[ns.command])
        for key, value in loaded.items():
            if key not in known:
                raise _Exit(EXIT_USAGE,
                            f"config key {key!r} is not an option of {ns.command!r}")
            merged[key] = value
    for key, value in vars(ns).items():
        if key in ("command", "config", "verbose"):
            continue
        if value is not None:
            merged[key] = value
    missing = [k for k in _REQUIRED[ns.command] if merged.get(k) is None]
    if missing:
        flags = ", ".join("--" + k.replace("_", "-") for k in missing)
        raise _Exit(EXIT_USAGE, f"missing required option(s): {flags}")
    return merged


def _method_tag(cli_name: str) -> str:
    tag = CLI_METHODS.get(str(cli_name).lower())
    if tag is None:
        raise _Exit(EXIT_USAGE,
                    f"unknown method {cli_name!r}, expected one of "
                    f"{', '.join(sorted(CLI_METHODS))}")
    return tag


def _load_valid_session(path):
    try:
        session = load_session(path)
    except SessionFormatError as exc:
        raise _Exit(EXIT_DATA, str(exc))
    violations = validate_session(session)
    if violations:
        detail = "; ".join(violations[:3])
        raise _Exit(EXIT_DATA, f"session {path} fails validation: {detail}")
    return session


def _numerical(fn):
    """Run a compute step, converting numerical blowups to exit code 3."""
    try:
        return fn()
    except np.linalg.LinAlgError as exc:
        raise _Exit(EXIT_NUMERICAL, f"numerical failure: {exc}")
    except FloatingPointError as exc:
        raise _Exit(EXIT_NUMERICAL, f"numerical failure: {exc}")
    except ValueError as exc:
        if "lambda_max is zero" in str(exc):
            raise _Exit(EXIT_NUMERICAL, f"numerical failure: {exc}")
        raise


def _cmd_synth(opts) -> int:
    out = Path(opts["out"])
    n_subjects, n_sessions = int(opts["subjects"]), int(opts["sessions"])
    if n_subjects < 1 or n_sessions < 1:
        raise _Exit(EXIT_USAGE, "subjects and sessions must be >= 1")
    base_seed = int(opts["seed"])
    try:
        for sid in range(1, n_subjects + 1):
            for k in range(1, n_sessions + 1):
                seed = base_seed + (sid - 1) * n_sessions + (k - 1)
                spec = SynthSpec(seed=seed,
                                 trials_per_class=int(opts["trials_per_class"]),
                                 erd_depth=float(opts["erd_depth"]))
                session, truth = generate_session(spec)
                save_synth_session(session, truth,
                                   out / f"subject_{sid}" / f"session_{k}")
    except ValueError as exc:
        raise _Exit(EXIT_USAGE, f"invalid generator settings: {exc}")
    trials = 2 * int(opts["trials_per_class"])
    print(f"wrote {out}: {n_subjects} subject(s) x {n_sessions} session(s), "
          f"{trials} trials each, seeds {base_seed}.."
          f"{base_seed + n_subjects * n_sessions - 1}")
    return EXIT_OK


def _check_fold_options(opts, keys=("inner_folds",)) -> None:
    for key in keys:
        if int(opts[key]) < 2:
            raise _Exit(EXIT_USAGE, f"--{key.replace('_', '-')} must be >= 2")
    if int(opts["margin"]) < 0:
        raise _Exit(EXIT_USAGE, "--margin must be >= 0")


def _cmd_train(opts) -> int:
    method = _method_tag(opts["method"])
    _check_fold_options(opts)
    session = _load_valid_session(opts["session"])
    bundle = _numerical(lambda: train_model(
        session, method,
        inner_k=int(opts["inner_folds"]), margin=int(opts["margin"]),
    ))
    emit_model(bundle, opts["out"])
    if bundle.dal is not None:
        extra = f", lambda={bundle.dal.regularizer.lam:.6g}"
    else:
        extra = f", shrinkage gamma={bundle.lda.gamma:.4g}"
    print(f"wrote {opts['out']} ({method}{extra})")
    return EXIT_OK


def _cmd_predict(opts) -> int:
    try:
        bundle = load_model(opts["model"])
    except (OSError, ValueError) as exc:
        raise _Exit(EXIT_DATA, f"cannot load model: {exc}")
    session = _load_valid_session(opts["session"])
    try:
        labels = _numerical(lambda: apply_model(bundle, session))
    except ValueError as exc:
        raise _Exit(EXIT_DATA, str(exc))
    lines = ["trial,label"] + [f"{i},{int(lab)}" for i, lab in enumerate(labels)]
    text = "\n".join(lines) + "\n"
    if opts["out"] is None:
        sys.stdout.write(text)
    else:
        Path(opts["out"]).write_text(text)
        print(f"wrote {opts['out']} ({len(labels)} predictions)")
    return EXIT_OK


def _cmd_cv(opts) -> int:
    method = _method_tag(opts["method"])
    _check_fold_options(opts, keys=("outer_folds", "inner_folds"))
    session = _load_valid_session(opts["session"])
    resample, bandpass = default_preprocessing(session.sampling_rate_hz)
    try:
        proc = preprocess_session(session, resample, bandpass)
        plan = CvPlan(n_trials=len(proc.trials),
                      k_folds=int(opts["outer_folds"]),
                      margin=int(opts["margin"]))
        report = _numerical(lambda: cross_validate_method(
            proc, method, plan, inner_k=int(opts["inner_folds"])))
    except ValueError as exc:
        raise _Exit(EXIT_DATA, str(exc))
    payload = {
        "method": report.method,
        "outer_folds": plan.k_folds,
        "inner_folds": int(opts["inner_folds"]),
        "margin": plan.margin,
        "fold_errors": list(report.fold_errors),
        "mean_error": report.mean_error,
        "std_error": report.std_error,
        "chosen_lambdas": list(report.chosen_lambdas),
    }
    if opts["report"] is not None:
        Path(opts["report"]).write_text(
            json.dumps(payload, sort_keys=True, indent=2) + "\n")
        print(f"wrote {opts['report']}")
    print(f"{method}: mean error {format_percent(report.mean_error * 100)}% "
          f"(sd {format_percent(report.std_error * 100)}%) "
          f"over {plan.k_folds} folds")
    return EXIT_OK


def _cmd_compare(opts) -> int:
    methods = tuple(_method_tag(m) for m in str(opts["methods"]).split(",") if m)
    try:
        config = CompareConfig(methods=methods,
                               outer_folds=int(opts["outer_folds"]),
                               inner_folds=int(opts["inner_folds"]),
                               margin=int(opts["margin"]),
                               workers=int(opts["workers"]))
    except ValueError as exc:
        raise _Exit(EXIT_USAGE, str(exc))
    try:
        payload = _numerical(lambda: run_compare(opts["dataset"], config))
    except SessionFormatError as exc:
        raise _Exit(EXIT_DATA, str(exc))
    if not payload["sessions"]:
        raise _Exit(EXIT_DATA, "every session failed validation; nothing to compare")
    json_path, md_path = write_reports(payload, opts["report_prefix"])
    print(f"wrote {json_path}")
    print(f"wrote {md_path}")
    for failure in payload["failures"]:
        print(f"skipped subject {failure['subject']} "
              f"session {failure['session']}: {failure['violations'][0]}",
              file=sys.stderr)
    avg = payload["average"]
    cells = ", ".join(f"{m} {format_percent(avg[m]['mean_pct'])}%"
                      for m in methods)
    print(f"average error: {cells}")
    return EXIT_OK


def _cmd_stats(opts) -> int:
    try:
        payload = json.loads(Path(opts["report"]).read_text())
    except OSError as exc:
        raise _Exit(EXIT_DATA, f"cannot read report: {exc}")
    except json.JSONDecodeError as exc:
        raise _Exit(EXIT_DATA, f"report is not valid JSON: {exc}")
    subjects = payload.get("subjects") or []
    methods = (payload.get("config") or {}).get("methods") or []
    if len(subjects) < 2 or len(methods) < 2:
        raise _Exit(EXIT_DATA,
                    "report needs >= 2 subjects and >= 2 methods for statistics")
    try:
        matrix = np.array([[row["methods"][m]["mean_pct"] / 100.0
                            for m in methods] for row in subjects])
    except (KeyError, TypeError) as exc:
        raise _Exit(EXIT_DATA, f"report is missing fields: {exc}")
    anova = _numerical(lambda: rm_anova(matrix))
    print(f"repeated-measures ANOVA: F({anova.df_effect}, {anova.df_error}) "
          f"= {anova.f_stat:.4g}, p = {anova.p_value:.4g}")
    pairs = [(i, j) for i in range(len(methods)) for j in range(i + 1, len(methods))]
    raw = []
    stats = []
    for i, j in pairs:
        t, df, p = paired_ttest(matrix[:, i], matrix[:, j])
        raw.append(p)
        stats.append((methods[i], methods[j], t, df))
    adjusted = bonferroni_adjust(raw, len(pairs))
    print(f"paired t tests ({len(pairs)} comparisons, Bonferroni):")
    for (a, b, t, df), p, padj in zip(stats, raw, adjusted):
        print(f"  {a} vs {b}: t({df}) = {t:.4g}, p = {p:.4g}, "
              f"adjusted p = {padj:.4g}")
    return EXIT_OK


_HANDLERS = {
    "synth": _cmd_synth,
    "train": _cmd_train,
    "predict": _cmd_predict,
    "cv": _cmd_cv,
    "compare": _cmd_compare,
    "stats": _cmd_stats,
}


def main(argv=None) -> int:
    parser = _build_parser()
    ns = parser.parse_args(argv)
    level = {0: logging.WARNING, 1: logging.INFO}.get(ns.verbose, logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    if ns.command is None:
        parser.print_usage(sys.stderr)
        print("bcidal: error: a command is required", file=sys.stderr)
        return EXIT_USAGE
    try:
        opts = _merge_config(ns)
        return _HANDLERS[ns.command](opts)
    except _Exit as exc:
        print(f"bcidal {ns.command}: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
