"""Train every model family on a small synthetic split and print the results table.

Uses the pipeline end to end with reduced sizes so it finishes in well under
a minute. Each model is trained twice, on all inputs and on the selected 16.

    python demos/02_train_and_score.py
"""

from genisbench.pipeline import RunConfig, run_pipeline
from genisbench.synth import SynthSpec

cfg = RunConfig(
    synth=SynthSpec(n_rows=5000, seed=3),
    task="multiclass",
    n_estimators=30,
    rfe_estimators=30,
    grid_rows=1500,
    architectures=((64, 32),),
    max_epochs=10,
    explain_rows=50,
    n_permutations=10,
    background_size=30,
)
report = run_pipeline(cfg)
print(report.human())
print("rows handed to each stage:")
for key, n in report.metadata["row_access"].items():
    print(f"  {key:<16} {n}")
