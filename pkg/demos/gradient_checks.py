# %% [markdown]
# # Checking gradients against finite differences
#
# Every differentiable piece has an analytic backward pass. `finite_diff_check`
# compares it with central differences and returns the worst relative error.

# %%
import numpy as np

from libra_balance import Tensor, finite_diff_check
from libra_balance import tensor as T
from libra_balance.loss import balanced_l1_tensor

x = Tensor(np.array([-2.0, -0.4, 0.3, 0.9, 1.7]))
err = finite_diff_check(lambda t: T.sum_all(balanced_l1_tensor(t)), x)
print(f"balanced L1: {err:.2e}")

# %%
a = Tensor(np.random.default_rng(0).normal(size=(3, 4)))
print(f"softmax rows: {finite_diff_check(lambda t: T.sum_all(T.mul(T.softmax_rows(t), t)), a):.2e}")

# %% [markdown]
# The full suite (losses, all tensor ops, the end-to-end pyramid):

# %%
from libra_balance.gradcheck import run_suite

for r in run_suite(seed=0):
    print(f"{r.op:26s} {r.max_rel_err:.2e}  tol {r.tolerance:.0e}  {'ok' if r.passed else 'FAIL'}")
