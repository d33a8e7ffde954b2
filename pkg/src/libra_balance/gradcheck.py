"""Finite-difference checks over every differentiable piece of the package."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import tensor as T
from .loss import (
    BalancedL1Params,
    DetectionTarget,
    balanced_l1_tensor,
    localization_loss,
    localization_loss_grad,
    multi_task_loss,
    multi_task_loss_grad,
)
from .pyramid import NonLocalWeights, balanced_feature_pyramid, make_levels, refine_nonlocal
from .tensor import Tensor, finite_diff_check

__all__ = ["GradcheckResult", "random_offsets", "numpy_grad_error", "run_suite", "LOSS_TOL", "PYRAMID_TOL"]

LOSS_TOL = 1e-6
OP_TOL = 1e-6
PYRAMID_TOL = 1e-4
STEP = 1e-6


@dataclass(frozen=True)
class GradcheckResult:
    op: str
    max_rel_err: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tolerance


def random_offsets(rng: np.random.Generator, n: int, lim: float = 3.0, margin: float = 1e-3) -> np.ndarray:
    """Uniform offsets in ``[-lim, lim]`` kept ``margin`` away from 0 and +-1."""
    out = []
    while len(out) < n:
        x = rng.uniform(-lim, lim)
        if abs(x) > margin and abs(abs(x) - 1.0) > margin:
            out.append(x)
    return np.array(out)


def numpy_grad_error(fun: Callable[[np.ndarray], float], grad: np.ndarray, x: np.ndarray, h: float = STEP) -> float:
    """Same error measure as :func:`finite_diff_check` for a plain numpy function."""
    x = np.array(x, dtype=np.float64)
    worst = 0.0
    for j in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp.flat[j] += h
        xm.flat[j] -= h
        numeric = (fun(xp) - fun(xm)) / (2 * h)
        worst = max(worst, abs(grad.flat[j] - numeric) / max(1.0, abs(numeric)))
    return worst


def _weighted_sum(rng: np.random.Generator, shape) -> Callable[[Tensor], Tensor]:
    probe = Tensor(rng.standard_normal(shape))
    return lambda t: T.sum_all(T.mul(t, probe))


def _loss_checks(rng: np.random.Generator, n: int, params: BalancedL1Params) -> list[GradcheckResult]:
    offsets = random_offsets(rng, n)
    bl1 = finite_diff_check(lambda t: T.sum_all(balanced_l1_tensor(t, params)), Tensor(offsets), STEP)

    loc = 0.0
    for _ in range(n):
        v = rng.uniform(-2, 2, 4)
        t = v + random_offsets(rng, 4)
        loc = max(loc, numpy_grad_error(lambda p: localization_loss(p, v, params), localization_loss_grad(t, v, params), t))

    mtl = 0.0
    for _ in range(n):
        scores = rng.dirichlet(np.ones(4)) * 0.9 + 0.025
        label = int(rng.integers(0, 4))
        v = rng.uniform(-2, 2, 4)
        sample = DetectionTarget(label, v, v + random_offsets(rng, 4), scores)
        lam = float(rng.uniform(0.5, 2.0))
        d_scores, d_pred = multi_task_loss_grad(sample, lam, params)

        def by_pred(p):
            return multi_task_loss(DetectionTarget(label, v, p, scores), lam, params)

        def by_scores(p):
            # the distribution check tolerates an O(h) perturbation of the sum
            return multi_task_loss(DetectionTarget(label, v, sample.pred, p), lam, params)

        mtl = max(mtl, numpy_grad_error(by_pred, d_pred, sample.pred), numpy_grad_error(by_scores, d_scores, scores))

    return [
        GradcheckResult("balanced_l1", bl1, LOSS_TOL),
        GradcheckResult("localization_loss", loc, LOSS_TOL),
        GradcheckResult("multi_task_loss", mtl, LOSS_TOL),
    ]


def _op_checks(rng: np.random.Generator) -> list[GradcheckResult]:
    def r(*shape):
        return Tensor(rng.standard_normal(shape))

    results = []

    def check(name, f, inputs, out_shape, tol=OP_TOL):
        probe = _weighted_sum(rng, out_shape)
        results.append(GradcheckResult(name, finite_diff_check(lambda *ts: probe(f(*ts)), inputs, STEP), tol))

    results.append(GradcheckResult("linear_sanity", finite_diff_check(T.sum_all, r(3, 4), STEP), 1e-8))
    check("add", T.add, [r(2, 3), r(2, 3)], (2, 3))
    check("mul", T.mul, [r(2, 3), r(2, 3)], (2, 3))
    check("reshape", lambda t: T.reshape(t, (3, 2)), [r(2, 3)], (3, 2))
    check("transpose", T.transpose, [r(2, 3)], (3, 2))
    check("matmul", T.matmul, [r(2, 3), r(3, 4)], (2, 4))
    check("softmax_rows", T.softmax_rows, [r(3, 5)], (3, 5))
    check("conv1x1", T.conv1x1, [r(3, 2, 2), r(4, 3)], (4, 2, 2))
    check("resize_nearest_up", lambda t: T.resize_nearest(t, (4, 6)), [r(2, 2, 3)], (2, 4, 6))
    check("resize_nearest_down", lambda t: T.resize_nearest(t, (2, 2)), [r(2, 4, 4)], (2, 2, 2))
    check("maxpool_to", lambda t: T.maxpool_to(t, (2, 2)), [r(2, 4, 4)], (2, 2, 2))
    check("mean_stack", lambda *ts: T.mean_stack(ts), [r(2, 3, 3) for _ in range(4)], (2, 3, 3))
    return results


def _pyramid_checks(rng: np.random.Generator, seed: int) -> list[GradcheckResult]:
    channels = 4
    w = NonLocalWeights.random(channels, seed=seed)
    x = Tensor(rng.standard_normal((channels, 4, 4)))
    probe = _weighted_sum(rng, (channels, 4, 4))

    def nl(xt, *ws):
        return probe(refine_nonlocal(xt, NonLocalWeights(*ws)))

    nl_err = finite_diff_check(nl, [x, *w.tensors()], STEP)

    pyr = make_levels(3, 8, channels, seed=seed)
    probes = [Tensor(rng.standard_normal(t.shape)) for t in pyr.levels]
    n_levels = len(pyr.levels)

    def bfp(*ts):
        out = balanced_feature_pyramid(list(ts[:n_levels]), NonLocalWeights(*ts[n_levels:]))
        total = T.sum_all(T.mul(out.levels[0], probes[0]))
        for p, q in zip(out.levels[1:], probes[1:]):
            total = T.add(total, T.sum_all(T.mul(p, q)))
        return total

    bfp_err = finite_diff_check(bfp, [*pyr.levels, *w.tensors()], STEP)
    return [
        GradcheckResult("refine_nonlocal", nl_err, OP_TOL),
        GradcheckResult("balanced_feature_pyramid", bfp_err, PYRAMID_TOL),
    ]


def run_suite(seed: int = 0, num_loss_samples: int = 100, params: BalancedL1Params | None = None) -> list[GradcheckResult]:
    """Loss checks on ``num_loss_samples`` random inputs, every tensor op, and the L=3 pyramid."""
    params = params or BalancedL1Params()
    rng = np.random.default_rng(seed)
    return _loss_checks(rng, num_loss_samples, params) + _op_checks(rng) + _pyramid_checks(rng, seed)
