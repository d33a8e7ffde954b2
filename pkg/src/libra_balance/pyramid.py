"""Balanced feature pyramid: rescale, integrate, refine, strengthen.

Every level is brought to one intermediate resolution (max-pooling finer
levels, nearest-upsampling coarser ones), averaged into a single balanced
feature map, optionally refined by an embedded-Gaussian non-local block,
then scattered back through the reverse resampling and added to each
original level. All steps are built from :mod:`libra_balance.tensor` ops, so
gradients reach both the input levels and the non-local weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tensor as T
from .tensor import Tensor

__all__ = [
    "PyramidLevels",
    "NonLocalWeights",
    "default_target_level",
    "rescale_to",
    "integrate",
    "refine_nonlocal",
    "strengthen",
    "balanced_feature_pyramid",
    "make_levels",
]


@dataclass
class PyramidLevels:
    """Ordered finest-to-coarsest stack of ``[C, H_l, W_l]`` feature maps."""

    levels: list[Tensor]
    integrated: Tensor | None = None

    def __post_init__(self):
        self.levels = list(self.levels)
        if not self.levels:
            raise ValueError("a pyramid needs at least one level")
        for t in self.levels:
            if t.data.ndim != 3:
                raise ValueError(f"pyramid levels must be [C, H, W], got {t.shape}")
        channels = {t.shape[0] for t in self.levels}
        if len(channels) != 1:
            raise ValueError(f"levels disagree on channel count: {sorted(channels)}")
        for fine, coarse in zip(self.levels, self.levels[1:]):
            (_, h, w), (_, h2, w2) = fine.shape, coarse.shape
            if (h2, w2) != (math.ceil(h / 2), math.ceil(w / 2)) or (h2, w2) == (h, w):
                raise ValueError(f"level {coarse.shape} does not halve {fine.shape}")

    def __len__(self) -> int:
        return len(self.levels)

    @property
    def shapes(self) -> list[tuple[int, ...]]:
        return [t.shape for t in self.levels]


@dataclass
class NonLocalWeights:
    """1x1 projections of the non-local block, each stored as ``[C_out, C_in]``."""

    theta: Tensor
    phi: Tensor
    g: Tensor
    w_z: Tensor

    def __post_init__(self):
        e, c = self.theta.shape
        for name in ("phi", "g"):
            if getattr(self, name).shape != (e, c):
                raise ValueError(f"{name} must have shape {(e, c)}, got {getattr(self, name).shape}")
        if self.w_z.shape != (c, e):
            raise ValueError(f"w_z must have shape {(c, e)}, got {self.w_z.shape}")

    @property
    def channels(self) -> int:
        return self.theta.shape[1]

    @property
    def embed_channels(self) -> int:
        return self.theta.shape[0]

    def tensors(self) -> list[Tensor]:
        return [self.theta, self.phi, self.g, self.w_z]

    @classmethod
    def random(cls, channels: int, seed: int = 0, embed_channels: int | None = None) -> NonLocalWeights:
        """Gaussian weights scaled by ``1/sqrt(C)``; embed width defaults to ``max(1, C // 2)``."""
        e = embed_channels if embed_channels is not None else max(1, channels // 2)
        rng = np.random.default_rng(seed)
        scale = 1.0 / math.sqrt(channels)
        return cls(
            theta=Tensor(rng.standard_normal((e, channels)) * scale),
            phi=Tensor(rng.standard_normal((e, channels)) * scale),
            g=Tensor(rng.standard_normal((e, channels)) * scale),
            w_z=Tensor(rng.standard_normal((channels, e)) * scale),
        )


def _levels(levels) -> list[Tensor]:
    return levels.levels if isinstance(levels, PyramidLevels) else list(levels)


def default_target_level(num_levels: int) -> int:
    """Second-coarsest level, or 0 for a single level."""
    return max(0, num_levels - 2)


def _check_target(target_level: int, n: int) -> None:
    if not 0 <= target_level < n:
        raise ValueError(f"target_level {target_level} outside [0, {n})")


def _resample(t: Tensor, size: tuple[int, int], finer: bool) -> Tensor:
    return T.maxpool_to(t, size) if finer else T.resize_nearest(t, size)


def rescale_to(levels, target_level: int) -> list[Tensor]:
    """Resample every level to the resolution of ``levels[target_level]``."""
    ts = _levels(levels)
    _check_target(target_level, len(ts))
    size = ts[target_level].shape[1:]
    out = []
    for i, t in enumerate(ts):
        if i == target_level:
            out.append(t)
        else:
            out.append(_resample(t, size, finer=i < target_level))
    return out


def integrate(rescaled: Sequence[Tensor]) -> Tensor:
    """Parameter-free average of the rescaled levels."""
    return T.mean_stack(rescaled)


def refine_nonlocal(x: Tensor, w: NonLocalWeights) -> Tensor:
    """Embedded-Gaussian non-local block with residual output.

    With ``n = H*W`` positions: ``A = softmax_rows(theta(x)^T phi(x))`` is
    ``n x n`` over keys, ``y = A g(x)^T`` and the result is ``w_z(y) + x``.
    """
    if x.data.ndim != 3 or x.shape[0] != w.channels:
        raise ValueError(f"non-local weights expect {w.channels} channels, got input {x.shape}")
    c, h, wd = x.shape
    e = w.embed_channels
    n = h * wd
    q = T.reshape(T.conv1x1(x, w.theta), (e, n))
    k = T.reshape(T.conv1x1(x, w.phi), (e, n))
    v = T.reshape(T.conv1x1(x, w.g), (e, n))
    attn = T.softmax_rows(T.matmul(T.transpose(q), k))
    y = T.matmul(attn, T.transpose(v))
    y = T.reshape(T.transpose(y), (e, h, wd))
    return T.add(T.conv1x1(y, w.w_z), x)


def strengthen(levels, refined: Tensor, target_level: int) -> PyramidLevels:
    """Scatter ``refined`` back to every level's resolution and add it on."""
    ts = _levels(levels)
    _check_target(target_level, len(ts))
    if refined.shape != ts[target_level].shape:
        raise ValueError(f"refined feature {refined.shape} != target level {ts[target_level].shape}")
    out = []
    for i, t in enumerate(ts):
        if i == target_level:
            back = refined
        else:
            # coarser levels are pooled from the refined map, finer ones upsampled
            back = _resample(refined, t.shape[1:], finer=i > target_level)
        out.append(T.add(t, back))
    return PyramidLevels(out, integrated=refined)


def balanced_feature_pyramid(
    levels, weights: NonLocalWeights | None = None, target_level: int | None = None
) -> PyramidLevels:
    """Full pipeline; without ``weights`` the refinement step is skipped."""
    pyr = levels if isinstance(levels, PyramidLevels) else PyramidLevels(levels)
    if target_level is None:
        target_level = default_target_level(len(pyr))
    balanced = integrate(rescale_to(pyr, target_level))
    if weights is not None:
        balanced = refine_nonlocal(balanced, weights)
    return strengthen(pyr, balanced, target_level)


def make_levels(
    num_levels: int, base_size: int, channels: int, seed: int = 0, requires_grad: bool = False
) -> PyramidLevels:
    """Random pyramid whose level ``l`` has side ``base_size / 2**l``.

    Level ``l`` is drawn from ``N(l, 1 / (l + 1)^2)`` so levels differ in
    both offset and spread.
    """
    if num_levels < 1 or channels < 1:
        raise ValueError("num_levels and channels must be >= 1")
    if base_size < 2 ** (num_levels - 1) or base_size & (base_size - 1):
        raise ValueError(f"base_size must be a power of two >= 2**(L-1), got {base_size}")
    rng = np.random.default_rng(seed)
    levels = []
    for lvl in range(num_levels):
        side = base_size >> lvl
        data = lvl + rng.standard_normal((channels, side, side)) / (lvl + 1)
        levels.append(Tensor(data, requires_grad=requires_grad))
    return PyramidLevels(levels)
