"""
Leakage-safe cross-validation for time series
=============================================

EEG trials are autocorrelated, so shuffled CV leaks.  Blockwise folds
keep test trials contiguous and drop a margin of neighbors from the
training side; nested selection then tunes lambda without touching the
outer test blocks.
"""

from bcidal.evalstats import CvPlan, cross_validate_method, make_blockwise_folds
from bcidal.models import default_preprocessing
from bcidal.preprocessing import preprocess_session
from bcidal.synth import SynthSpec, generate_session

# The fold layout on a toy size first: 20 trials, 4 folds, margin 2.
# Indices adjacent to each test block never appear in its training set.
for train, test in make_blockwise_folds(20, 4, margin=2):
    marks = ["."] * 20
    for i in train:
        marks[i] = "T"
    for i in test:
        marks[i] = "E"
    print("".join(marks), f" train={len(train)} test={len(test)}")

# Now a real session.  cross_validate_method runs the outer loop and,
# for the DAL methods, an inner blockwise loop per fold to pick lambda.
session, _ = generate_session(SynthSpec(seed=19, erd_depth=0.7,
                                        noise_scale=0.5))
proc = preprocess_session(session, *default_preprocessing(session.sampling_rate_hz))
plan = CvPlan(n_trials=60, k_folds=5, margin=5)

for method in ("CSP-LDA", "DAL-GLR"):
    report = cross_validate_method(proc, method, plan, inner_k=5)
    folds = ", ".join(f"{e:.3f}" for e in report.fold_errors)
    print(f"{method}: mean error {report.mean_error:.3f} "
          f"(sd {report.std_error:.3f}), folds [{folds}]")
    if report.chosen_lambdas:
        lams = ", ".join(f"{l:.3g}" for l in report.chosen_lambdas)
        print(f"  chosen lambda per fold: [{lams}]")
