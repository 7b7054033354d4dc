"""Draw observations under both hypotheses and look at what got planted."""
# %%
import numpy as np

from plantedlab import PlacementConfig, coordinate_map, generate, make_family

config = PlacementConfig.of(n=24, k=4, m=2, placement="circ")
family = make_family("gradient", "mean", k=4, m=2, amplitude=3.0)

null = generate(config, family, "H0", rng=0)
planted = generate(config, family, "H1", rng=0)
print("null mean", round(float(null.data.mean()), 4))

# %% Each block carries one template; circular blocks may wrap around the edges.
for block, label in zip(planted.instance.blocks, planted.instance.labels):
    print("template", label, "rows", block.rows, "cols", block.cols, "wraps", block.wraps(24))

# %% The coordinate map lines the block up with its template.
block = planted.instance.blocks[0]
template = family.templates[planted.instance.labels[0]]
residual = np.array([[planted.data[i, j] - template[coordinate_map(block, i, j)]
                      for j in block.cols] for i in block.rows])
print("residual sd inside block", round(float(residual.std()), 3))

# %% Variance shifts scale entries instead of moving them.
var_family = make_family("homogeneous", "variance", k=4, m=2, amplitude=0.8)
obs = generate(config, var_family, "H1", rng=1)
inside = np.concatenate([obs.data[b.index].ravel() for b in obs.instance.blocks])
print("planted variance", round(float(inside.var()), 3), "(target 1.8)")
