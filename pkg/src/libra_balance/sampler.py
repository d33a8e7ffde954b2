"""Random and IoU-balanced negative sampling, per-ground-truth positive balancing.

All randomness comes from ``numpy.random.default_rng`` (PCG64) seeded with
an explicit integer, so a given pool and seed always yield the same report.
Selected indices refer to positions in the candidate list passed in; only
candidates carrying the matching label are eligible.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .boxes import Candidate, Label

__all__ = [
    "HARD_IOU",
    "SamplerConfig",
    "SampleReport",
    "bin_index",
    "bin_quotas",
    "sample_random",
    "sample_iou_balanced",
    "sample_positive_balanced",
    "random_select",
    "iou_balanced_select",
    "positive_balanced_select",
]

# Overlap above which a negative counts as hard when summarising a selection.
HARD_IOU = 0.05


@dataclass(frozen=True)
class SamplerConfig:
    num_negatives: int = 384
    num_bins: int = 3
    bin_range: tuple[float, float] = (0.0, 0.5)
    num_positives: int = 128
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.bin_range
        if self.num_negatives < 1:
            raise ValueError(f"num_negatives must be >= 1, got {self.num_negatives}")
        if self.num_positives < 1:
            raise ValueError(f"num_positives must be >= 1, got {self.num_positives}")
        if self.num_bins < 1:
            raise ValueError(f"num_bins must be >= 1, got {self.num_bins}")
        if not 0.0 <= lo < hi <= 1.0:
            raise ValueError(f"bin_range must satisfy 0 <= lo < hi <= 1, got {self.bin_range}")
        object.__setattr__(self, "bin_range", (float(lo), float(hi)))


@dataclass
class SampleReport:
    """Outcome of one sampling call.

    ``pool_counts``/``selected_counts`` are per IoU bin for the negative
    samplers and per ground truth (ascending index) for the positive sampler.
    """

    selected: list[int]
    pool_counts: list[int]
    selected_counts: list[int]
    hard_fraction: float
    groups: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def bin_index(ious, num_bins: int, bin_range: tuple[float, float] = (0.0, 0.5)) -> np.ndarray:
    """Equal-width bin of each IoU; out-of-range values clamp to the end bins."""
    lo, hi = bin_range
    ious = np.asarray(ious, dtype=np.float64)
    k = np.floor((ious - lo) / (hi - lo) * num_bins).astype(np.int64)
    return np.clip(k, 0, num_bins - 1)


def bin_quotas(pool_counts: Sequence[int], num_samples: int) -> list[int]:
    """Per-bin draw counts for a pool with ``pool_counts[k]`` candidates in bin ``k``.

    Each bin is owed ``N // K`` draws, the remainder going one each to the
    lowest bins. Bins that cannot meet their quota give the shortfall back,
    and it is handed out one draw at a time, round-robin from bin 0, to bins
    that still have unselected candidates.
    """
    pool = [int(m) for m in pool_counts]
    k = len(pool)
    base, rem = divmod(int(num_samples), k)
    take = [min(base + (1 if i < rem else 0), m) for i, m in enumerate(pool)]
    shortfall = min(int(num_samples), sum(pool)) - sum(take)
    while shortfall > 0:
        for i in range(k):
            if shortfall == 0:
                break
            if take[i] < pool[i]:
                take[i] += 1
                shortfall -= 1
    return take


def random_select(num_pool: int, num_samples: int, rng: np.random.Generator) -> np.ndarray:
    """Positions ``0..num_pool-1`` drawn uniformly without replacement, sorted."""
    n = min(int(num_samples), int(num_pool))
    if n == 0:
        return np.empty(0, dtype=np.int64)
    return np.sort(rng.permutation(num_pool)[:n])


def iou_balanced_select(ious, num_samples: int, num_bins: int, bin_range, rng: np.random.Generator):
    """Array form of IoU-balanced sampling.

    Returns ``(positions, pool_counts, selected_counts)`` where positions
    index into ``ious``.
    """
    ious = np.asarray(ious, dtype=np.float64)
    bins = bin_index(ious, num_bins, bin_range)
    pool_counts = np.bincount(bins, minlength=num_bins)
    take = bin_quotas(pool_counts, num_samples)
    chosen = []
    for k in range(num_bins):
        if take[k] == 0:
            continue
        members = np.flatnonzero(bins == k)
        chosen.append(members[rng.permutation(members.size)[: take[k]]])
    picked = np.sort(np.concatenate(chosen)) if chosen else np.empty(0, dtype=np.int64)
    return picked, pool_counts.tolist(), list(take)


def _eligible(candidates: Sequence[Candidate], label: Label) -> tuple[np.ndarray, np.ndarray]:
    idx = [i for i, c in enumerate(candidates) if c.label == label]
    ious = [candidates[i].iou for i in idx]
    return np.asarray(idx, dtype=np.int64), np.asarray(ious, dtype=np.float64)


def _hard_fraction(ious: np.ndarray) -> float:
    if ious.size == 0:
        return 0.0
    return float(np.count_nonzero(ious >= HARD_IOU)) / ious.size


def sample_random(
    negatives: Sequence[Candidate],
    num_negatives: int,
    seed: int,
    num_bins: int = 1,
    bin_range: tuple[float, float] = (0.0, 0.5),
) -> SampleReport:
    """Uniformly pick ``min(N, M)`` negatives; each is kept with probability N/M.

    ``num_bins``/``bin_range`` only shape the per-bin counts in the report.
    """
    idx, ious = _eligible(negatives, Label.NEGATIVE)
    rng = np.random.default_rng(seed)
    pos = random_select(idx.size, num_negatives, rng)
    bins = bin_index(ious, num_bins, bin_range)
    return SampleReport(
        selected=idx[pos].tolist(),
        pool_counts=np.bincount(bins, minlength=num_bins).tolist(),
        selected_counts=np.bincount(bins[pos], minlength=num_bins).tolist(),
        hard_fraction=_hard_fraction(ious[pos]),
    )


def sample_iou_balanced(negatives: Sequence[Candidate], cfg: SamplerConfig = SamplerConfig()) -> SampleReport:
    """Split negatives into ``cfg.num_bins`` IoU bins and draw equal quotas per bin.

    In a bin holding ``M_k`` candidates that meets its quota, each candidate
    is picked with probability ``(N / K) / M_k``.
    """
    idx, ious = _eligible(negatives, Label.NEGATIVE)
    rng = np.random.default_rng(cfg.seed)
    pos, pool_counts, taken = iou_balanced_select(ious, cfg.num_negatives, cfg.num_bins, cfg.bin_range, rng)
    return SampleReport(
        selected=idx[pos].tolist(),
        pool_counts=pool_counts,
        selected_counts=taken,
        hard_fraction=_hard_fraction(ious[pos]),
    )


def positive_balanced_select(gt_index, num_positives: int, rng: np.random.Generator):
    """Array form of per-ground-truth balancing.

    Returns ``(positions, groups, pool_counts, selected_counts)``.
    """
    gt = np.asarray(gt_index, dtype=np.int64)
    groups = np.unique(gt)
    pool = [int(np.count_nonzero(gt == g)) for g in groups]
    take = [0] * len(groups)
    budget = min(int(num_positives), gt.size)
    while budget > 0:
        for i in range(len(groups)):
            if budget == 0:
                break
            if take[i] < pool[i]:
                take[i] += 1
                budget -= 1
    chosen = []
    for g, n in zip(groups, take):
        if n == 0:
            continue
        members = np.flatnonzero(gt == g)
        chosen.append(members[rng.permutation(members.size)[:n]])
    pos = np.sort(np.concatenate(chosen)) if chosen else np.empty(0, dtype=np.int64)
    return pos, groups.tolist(), pool, take


def sample_positive_balanced(positives: Sequence[Candidate], num_positives: int, seed: int) -> SampleReport:
    """Spread the positive budget evenly over ground truths.

    Groups are visited in ascending ground-truth order, one draw per group per
    round, until the budget is spent or every group is exhausted.
    """
    idx, ious = _eligible(positives, Label.POSITIVE)
    gt = [positives[i].gt_index for i in idx]
    rng = np.random.default_rng(seed)
    pos, groups, pool, take = positive_balanced_select(gt, num_positives, rng)
    return SampleReport(
        selected=idx[pos].tolist(),
        pool_counts=pool,
        selected_counts=take,
        hard_fraction=_hard_fraction(ious[pos]),
        groups=groups,
    )
