# %% [markdown]
# # Balanced feature pyramid
#
# Four levels are rescaled to one size, averaged, refined by a non-local
# block and added back to every level.

# %%
import numpy as np

from libra_balance import NonLocalWeights, balanced_feature_pyramid
from libra_balance import PyramidLevels, Tensor
from libra_balance.pyramid import integrate, make_levels, rescale_to

pyr = make_levels(4, base_size=32, channels=8, seed=0)
print("input shapes", pyr.shapes)

# %%
target = 2
same = rescale_to(pyr, target)
print("rescaled", [t.shape for t in same])
mixed = integrate(same)
print(f"integrated mean {mixed.data.mean():.4f}")

# %% [markdown]
# Every output level gains the same mixed signal, resized to its own scale,
# so each level's mean shifts by roughly the integrated mean.

# %%
out = balanced_feature_pyramid(pyr, NonLocalWeights.random(8, seed=0), target)
for lvl, (a, b) in enumerate(zip(pyr.levels, out.levels)):
    print(f"level {lvl}: mean {a.data.mean():+.3f} -> {b.data.mean():+.3f}")

# %% [markdown]
# A pyramid whose levels all hold the same constant comes back doubled.

# %%
flat = PyramidLevels([Tensor(np.full((2, 8 >> i, 8 >> i), 0.3)) for i in range(3)])
print([float(t.data.max()) for t in balanced_feature_pyramid(flat).levels])
