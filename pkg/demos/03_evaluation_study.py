"""
A repeated train/test study
===========================

Every variant is fitted on the same random splits, so per-split EL1
differences are paired and can be tested directly.
"""

from quantgp import EMConfig, SimulationSpec, evaluate, paired_comparison, simulate

spec = SimulationSpec(levels=((0.0, 0.25, 0.5, 0.75, 1.0), (0.0, 0.33, 0.67, 1.0)), replicates=100)
ds, oracle = simulate(spec, seed=7)

report = evaluate(ds, variants=("gp", "lmgp"), train_proportions=(0.4, 0.7), repeats=5,
                  seed=0, oracle=oracle, n_components=6, config=EMConfig(max_iter=15, inner_maxiter=10))
print(report.to_text(include_timing=True))

for prop in report.proportions:
    diff, t, p = paired_comparison(report, "lmgp", "gp", prop)
    print(f"proportion {prop:g}: mean EL1 difference lmgp - gp = {diff:+.4f} (one-sided p = {p:.3g})")
