"""Compare the exact second moment of the likelihood ratio with its closed-form bound."""
# %%
import numpy as np

from plantedlab import (BranchInapplicableError, PlacementConfig, TemplateFamily,
                        exact_second_moment, second_moment_upper_bound)

rng = np.random.default_rng(0)
for n, k, m in [(4, 1, 2), (4, 2, 1), (4, 2, 2)]:
    for placement in ("noncon", "con", "circ"):
        config = PlacementConfig.of(n, k, m, placement)
        family = TemplateFamily("mean", rng.uniform(0, 0.3, size=(m, k, k)))
        exact = exact_second_moment(config, family)
        try:
            bound = f"{second_moment_upper_bound(config, family):.5f}"
        except BranchInapplicableError:
            bound = "n/a"
        print(f"n={n} k={k} m={m} {placement:6s} exact {exact:.5f} bound {bound}")

# %% Small second moments mean the hypotheses are close in total variation.
