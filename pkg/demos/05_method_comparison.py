"""
Comparing decoding methods across subjects
==========================================

Generate a miniature multi-subject dataset, run the full comparison
pipeline, and read the report it produces.
"""

import tempfile
from pathlib import Path

from bcidal.compare import CompareConfig, render_markdown, run_compare
from bcidal.synth import SynthSpec, generate_session, save_synth_session

# Three subjects, one session each, kept small so this runs in seconds.
# Subject identity only enters through the seed.
with tempfile.TemporaryDirectory() as tmp:
    root = Path(tmp)
    for sid in range(1, 4):
        spec = SynthSpec(seed=300 + sid, trials_per_class=12,
                         fs_hz=128.0, trial_seconds=2.0,
                         erd_depth=0.6, noise_scale=0.5)
        session, truth = generate_session(spec)
        save_synth_session(session, truth,
                           root / f"subject_{sid:02d}" / "session_01")

    # Two methods and shallow folds keep the demo quick; the defaults
    # (all four methods, 10 outer folds) are what the CLI uses.
    config = CompareConfig(methods=("CSP-LDA", "DAL-GLR"),
                           outer_folds=4, inner_folds=3, margin=2)
    payload = run_compare(root, config)

# The payload is one JSON-ready dict: per-session fold details, one row
# per subject, a pooled average, and the significance tests.
for row in payload["subjects"]:
    cells = ", ".join(f"{m} {row['methods'][m]['mean_pct']:.1f}%"
                      for m in config.methods)
    print(f"subject {row['subject']}: {cells}")

stats = payload["stats"]
anova = stats["rm_anova"]
print(f"ANOVA: F({anova['df_effect']}, {anova['df_error']}) = "
      f"{anova['f_stat']:.2f}, p = {anova['p_value']:.4f}")
for pair in stats["pairwise"]:
    print(f"{pair['a']} vs {pair['b']}: t({pair['df']}) = {pair['t_stat']:.2f}, "
      f"adjusted p = {pair['p_adjusted']:.4f}")

# render_markdown turns the same payload into the human-readable report;
# write_reports(payload, prefix) saves both forms deterministically.
print()
print(render_markdown(payload))
