"""Run the four tests on planted matrices and compare statistics with thresholds."""
# %%
from plantedlab import PlacementConfig, ScanPlan, generate, make_family, run_test
from plantedlab.detectors import strongest_mean_template

n, m = 128, 2
plan = ScanPlan.default("con", delta=0.5)

# %% Mean shift: the global sum sees total mass, the scan sees the strongest template.
config = PlacementConfig.of(n, 8, m, "con")
mean_family = make_family("random-smooth", "mean", 8, m, energy=80.0, seed=4)
obs = generate(config, mean_family, "H1", rng=7)
for test in ("sum", "mean-scan"):
    d = run_test(test, obs, mean_family, plan)
    print(f"{test:9s} stat {d.statistic_value:9.2f} thr {d.threshold:8.2f} -> {d.decision}")
strongest = strongest_mean_template(mean_family)
print("planted", obs.instance.block_for(strongest).origin, "found", d.argmax_block.origin)

# %% Variance shift: larger blocks are needed because the per-entry signal is weaker.
config = PlacementConfig.of(n, 16, m, "con")
var_family = make_family("homogeneous", "variance", 16, m, amplitude=0.9)
obs = generate(config, var_family, "H1", rng=8)
for test in ("quad", "var-scan"):
    d = run_test(test, obs, var_family, plan)
    print(f"{test:9s} stat {d.statistic_value:9.2f} thr {d.threshold:8.2f} -> {d.decision}")
