"""Rank flow features with the five-scorer ensemble and keep the top 16.

A synthetic table carries 20 class-dependent behavioral features plus a
pure-noise column and a constant column. The ensemble should push the two
injected columns to the bottom of the ranking.

    python demos/01_feature_selection.py
"""

from genisbench.featsel import RfeConfig, select_features
from genisbench.flow_data import apply_exclusion_policy, one_hot_encode
from genisbench.synth import SynthSpec, synth_generate

table = one_hot_encode(apply_exclusion_policy(synth_generate(SynthSpec(n_rows=4000, seed=1))))
print(f"{table.n_rows} flows, {len(table.feature_names)} model inputs")
print("excluded:", ", ".join(name for name, _ in table.exclusions))

result = select_features(table, "CategoryLabel", k=16, rfe=RfeConfig(n_estimators=30))
print()
print(result.render())
print()
print("bottom of the ranking:", result.ranking[-4:])
print(f"top 2 hold {100 * result.top_fraction(2):.1f}% of aggregate importance")
