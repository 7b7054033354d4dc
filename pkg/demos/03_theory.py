"""Evaluate the impossibility conditions and detection ratios for a few families."""
# %%
import json

from plantedlab import PlacementConfig, make_family, smooth_signal_check
from plantedlab.theory import bound_report

config = PlacementConfig.of(n=512, k=8, m=3, placement="circ")

# %% A weak smooth family sits inside the impossible region.
weak = make_family("gradient", "mean", 8, 3, amplitude=0.05)
report = bound_report(weak, config)
print("theta*", report.theta_star, "energy", report.energy)
for name, cond in report.conditions.items():
    print(f"  {name:30s} lhs {cond.lhs:10.4g} rhs {cond.rhs:10.4g} satisfied {cond.satisfied}")

# %% Spiky templates fail the smoothness check even at small amplitude.
spike = make_family("spike", "mean", 8, 3, amplitude=0.5)
print(json.dumps(smooth_signal_check(spike).__dict__, indent=1))
