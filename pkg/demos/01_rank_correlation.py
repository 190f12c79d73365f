"""How strongly do benchmark properties track fuzzer performance?

Generates the built-in demo campaign (4 fuzzers x 11 programs x 24 trials),
rank-transforms properties and performance, and reports Spearman's rho per
property: within each program for corpus properties, across all trials for
program-level ones.  This is the scatter-of-ranks analysis: each trial is a
point (property rank, performance rank), and the per-rank mean series shows
the trend the correlation summarizes.
"""

import numpy as np

from fuzzeval import RankScope, paper_shaped_fixture
from fuzzeval.report import rank_both_scopes, spearman_table

dataset = paper_shaped_fixture()
print(f"campaign: {len(dataset)} rows, programs={len(dataset.programs)}, "
      f"fuzzers={list(dataset.fuzzers)}")
print(f"properties: {list(dataset.property_keys)}")
print()

ranked = rank_both_scopes(dataset)

print("spearman rho, property rank vs performance rank")
print(f"{'property':<24} {'scope':<8} {'rho':>8}")
for entry in spearman_table(ranked, list(dataset.property_keys)):
    print(f"{entry.property:<24} {entry.scope.value:<8} {entry.rho:>8.3f}")
print()

# the mean performance rank at each coverage rank: the black-dot trend line
key = "init_coverage"
prop = ranked.property_rank(key, RankScope.WITHIN_PROGRAM)
perf = ranked.perf_rank[RankScope.WITHIN_PROGRAM]
print(f"mean performance rank by {key} rank (1..24, within program):")
for rank_value in (1.0, 6.0, 12.0, 18.0, 24.0):
    mask = prop == rank_value
    if mask.any():
        print(f"  {key} rank {rank_value:>4.0f}: "
              f"mean perf rank {np.mean(perf[mask]):.2f} over {mask.sum()} rows")
print()
print("higher initial coverage pushes final coverage up across every fuzzer,")
print("which is exactly what the positive rho above quantifies.")
