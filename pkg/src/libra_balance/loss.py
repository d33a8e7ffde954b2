"""Smooth L1 and balanced L1 regression losses with closed-form gradients.

The balanced L1 loss keeps the outlier gradient at a constant ``gamma`` and
lifts the inlier gradient to ``alpha * ln(b|x| + 1)``; ``b`` is pinned by
``alpha * ln(b + 1) = gamma`` so both gradient branches meet at ``|x| = 1``.
Functions accept scalars or numpy arrays and broadcast elementwise.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .tensor import Tensor, elementwise

__all__ = [
    "OUTLIER_LOSS",
    "CLS_EPS",
    "BalancedL1Params",
    "DetectionTarget",
    "SampleKind",
    "solve_b",
    "balanced_l1",
    "balanced_l1_grad",
    "balanced_l1_tensor",
    "smooth_l1",
    "smooth_l1_grad",
    "localization_loss",
    "localization_loss_grad",
    "multi_task_loss",
    "multi_task_loss_grad",
    "classify_sample",
]

OUTLIER_LOSS = 1.0
CLS_EPS = 1e-12


def solve_b(alpha: float, gamma: float) -> float:
    """Closed-form ``b`` satisfying ``alpha * ln(b + 1) = gamma``."""
    if not (alpha > 0 and gamma > 0):
        raise ValueError(f"alpha and gamma must be positive, got alpha={alpha}, gamma={gamma}")
    return math.expm1(gamma / alpha)


@dataclass(frozen=True)
class BalancedL1Params:
    alpha: float = 0.5
    gamma: float = 1.5

    def __post_init__(self):
        # validates alpha/gamma
        solve_b(self.alpha, self.gamma)

    @property
    def b(self) -> float:
        return solve_b(self.alpha, self.gamma)

    @property
    def c_const(self) -> float:
        """Offset of the outlier branch making the loss continuous at ``|x| = 1``."""
        return _inlier_loss(1.0, self.alpha, self.b) - self.gamma


DEFAULT_PARAMS = BalancedL1Params()


def _inlier_loss(ax, alpha, b):
    # (alpha/b) * ((1+u) ln(1+u) - u) with u = b|x|; series near 0 avoids cancellation
    u = b * np.asarray(ax, dtype=np.float64)
    small = u < 1e-4
    us = np.where(small, u, 0.0)
    series = us * us / 2.0 - us**3 / 6.0 + us**4 / 12.0
    exact = (1.0 + u) * np.log1p(u) - u
    return alpha / b * np.where(small, series, exact)


def _scalar_out(x, out):
    return float(out) if np.ndim(x) == 0 else out


def balanced_l1(x, params: BalancedL1Params = DEFAULT_PARAMS):
    """Balanced L1 loss, even in ``x``."""
    a, g, b = params.alpha, params.gamma, params.b
    ax = np.abs(np.asarray(x, dtype=np.float64))
    inner = np.minimum(ax, 1.0)
    out = np.where(ax < 1.0, _inlier_loss(inner, a, b), g * ax + params.c_const)
    return _scalar_out(x, out)


def balanced_l1_grad(x, params: BalancedL1Params = DEFAULT_PARAMS):
    """Derivative of :func:`balanced_l1`; odd in ``x`` and bounded by ``gamma``."""
    a, g, b = params.alpha, params.gamma, params.b
    x_arr = np.asarray(x, dtype=np.float64)
    ax = np.abs(x_arr)
    mag = np.where(ax < 1.0, a * np.log1p(b * np.minimum(ax, 1.0)), g)
    return _scalar_out(x, np.sign(x_arr) * mag)


def balanced_l1_tensor(t: Tensor, params: BalancedL1Params = DEFAULT_PARAMS) -> Tensor:
    """Elementwise balanced L1 as a differentiable tensor op."""
    return elementwise(t, lambda v: balanced_l1(v, params), lambda v: balanced_l1_grad(v, params))


def smooth_l1(x):
    """Smooth L1 with its inflection at ``|x| = 1``."""
    ax = np.abs(np.asarray(x, dtype=np.float64))
    return _scalar_out(x, np.where(ax < 1.0, 0.5 * ax * ax, ax - 0.5))


def smooth_l1_grad(x):
    x_arr = np.asarray(x, dtype=np.float64)
    return _scalar_out(x, np.where(np.abs(x_arr) < 1.0, x_arr, np.sign(x_arr)))


def _offsets(pred, target) -> np.ndarray:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != (4,) or target.shape != (4,):
        raise ValueError(f"expected 4-vectors (x, y, w, h), got {pred.shape} and {target.shape}")
    return pred - target


def localization_loss(pred, target, params: BalancedL1Params = DEFAULT_PARAMS) -> float:
    """Sum of balanced L1 over the four box offsets."""
    return float(np.sum(balanced_l1(_offsets(pred, target), params)))


def localization_loss_grad(pred, target, params: BalancedL1Params = DEFAULT_PARAMS) -> np.ndarray:
    """Gradient of :func:`localization_loss` with respect to ``pred``."""
    return balanced_l1_grad(_offsets(pred, target), params)


@dataclass(frozen=True)
class DetectionTarget:
    """One RoI's classification and regression quantities.

    ``label`` 0 is background; ``scores`` is a class distribution.
    """

    label: int
    target: np.ndarray
    pred: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        for name in ("target", "pred", "scores"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        if self.label < 0 or self.label >= self.scores.size:
            raise ValueError(f"label {self.label} outside [0, {self.scores.size})")
        if self.target.shape != (4,) or self.pred.shape != (4,):
            raise ValueError("target and pred must be 4-vectors")
        for name in ("target", "pred", "scores"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} must be finite")
        if np.any(self.scores < 0) or abs(self.scores.sum() - 1.0) > 1e-4:
            raise ValueError("scores must be a probability distribution")


def multi_task_loss(
    sample: DetectionTarget, lam: float = 1.0, params: BalancedL1Params = DEFAULT_PARAMS
) -> float:
    """Negative log-likelihood of the true class plus ``lam`` times the foreground localization loss."""
    if lam < 0:
        raise ValueError(f"lam must be >= 0, got {lam}")
    cls = -math.log(max(float(sample.scores[sample.label]), CLS_EPS))
    if sample.label < 1:
        return cls
    return cls + lam * localization_loss(sample.pred, sample.target, params)


def multi_task_loss_grad(
    sample: DetectionTarget, lam: float = 1.0, params: BalancedL1Params = DEFAULT_PARAMS
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of :func:`multi_task_loss` with respect to ``(scores, pred)``."""
    if lam < 0:
        raise ValueError(f"lam must be >= 0, got {lam}")
    d_scores = np.zeros_like(sample.scores)
    p = float(sample.scores[sample.label])
    if p > CLS_EPS:
        d_scores[sample.label] = -1.0 / p
    if sample.label < 1:
        return d_scores, np.zeros(4)
    return d_scores, lam * localization_loss_grad(sample.pred, sample.target, params)


class SampleKind(str, enum.Enum):
    INLIER = "inlier"
    OUTLIER = "outlier"


def classify_sample(loss: float) -> SampleKind:
    """Samples whose loss reaches 1.0 are outliers."""
    if not math.isfinite(loss):
        raise ValueError(f"loss must be finite, got {loss}")
    return SampleKind.OUTLIER if loss >= OUTLIER_LOSS else SampleKind.INLIER
