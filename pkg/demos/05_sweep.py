"""Sweep the signal energy through the scan threshold and write phase-diagram rows."""
# %%
import math
import sys

from plantedlab import ExperimentConfig, Sweep, emit_report, run_sweep

n, k = 128, 8
tau2 = 4.5 * math.log(n)
grid = tuple(round(f * tau2, 3) for f in (0.25, 0.5, 1.0, 2.0, 4.0))
config = ExperimentConfig(
    n=n, k=k, m=1, placement="con", tests=("mean-scan", "sum"),
    recipe={"name": "gradient", "kind": "mean", "energy": 1.0},
    trials=60, master_seed=2026, sweep=Sweep("energy", grid))

# %% One CSV row per grid value and test; risk falls as the energy crosses tau^2.
points = run_sweep(config, threads=2)
emit_report(points, sys.argv[1] if len(sys.argv) > 1 else None)
for p in points:
    r = p.report["mean-scan"]
    print(f"energy {p.value:7.2f}  scan risk {r.risk:.3f} +- {r.ci_half_width:.3f}")
