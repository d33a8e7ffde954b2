# %% [markdown]
# # Balanced L1 versus smooth L1
#
# The balanced loss raises the gradient for small offsets and caps it at
# gamma for large ones. `b` is tied to alpha and gamma so both branches meet
# at |x| = 1.

# %%
import numpy as np

from libra_balance import BalancedL1Params, balanced_l1, balanced_l1_grad, smooth_l1, smooth_l1_grad

p = BalancedL1Params(alpha=0.5, gamma=1.5)
print(f"b = {p.b:.6f}  (e^3 - 1 = {np.e**3 - 1:.6f}),  C = {p.c_const:.6f}")

# %%
xs = np.array([0.05, 0.1, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0])
print(" x     smoothL1  grad    balanced  grad")
for x in xs:
    print(f"{x:4.2f}  {smooth_l1(x):8.4f}  {smooth_l1_grad(x):6.3f}  {balanced_l1(x, p):8.4f}  {balanced_l1_grad(x, p):6.3f}")

# %% [markdown]
# Smaller alpha pushes inlier gradients up further. gamma only moves the cap.

# %%
for alpha in (0.2, 0.3, 0.5, 1.0):
    q = BalancedL1Params(alpha, 1.5)
    print(f"alpha={alpha:<4} grad(0.1)={balanced_l1_grad(0.1, q):.3f}  grad(3)={balanced_l1_grad(3.0, q):.3f}")

# %% [markdown]
# The same comparison as CSV, one file per (alpha, gamma) pair:
#
#     libra-balance loss-curves --alpha 0.2,0.5 --gamma 1.5 --out curves.csv
