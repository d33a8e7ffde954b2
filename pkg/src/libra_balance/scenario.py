"""Synthetic detection scenarios and their JSON form.

A scenario is a set of ground-truth boxes plus a candidate pool. Most
candidates are scattered over the whole image (nearly all of them overlap no
object), the rest are jittered copies of ground truths, so the negative
pool's IoU distribution is heavily skewed towards zero.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .boxes import Box2D, as_array

__all__ = ["ScenarioConfig", "Scenario", "gen_scenario", "gen_scenario_arrays", "load_scenario", "save_scenario"]


@dataclass(frozen=True)
class ScenarioConfig:
    image_size: float = 512.0
    num_gts: int = 4
    num_candidates: int = 1000
    # fraction of candidates placed uniformly over the image
    skew: float = 0.8

    def __post_init__(self):
        if self.num_candidates < 1:
            raise ValueError("num_candidates must be >= 1")
        if self.num_gts < 0:
            raise ValueError("num_gts must be >= 0")
        if not 0.0 <= self.skew <= 1.0:
            raise ValueError(f"skew must lie in [0, 1], got {self.skew}")
        if not self.image_size > 16:
            raise ValueError("image_size must exceed 16")


@dataclass
class Scenario:
    ground_truths: np.ndarray
    candidates: np.ndarray

    def boxes(self) -> tuple[list[Box2D], list[Box2D]]:
        return (
            [Box2D(*map(float, r)) for r in self.ground_truths],
            [Box2D(*map(float, r)) for r in self.candidates],
        )


def _clip(boxes: np.ndarray, size: float) -> np.ndarray:
    out = np.clip(boxes, 0.0, size)
    out[:, 2] = np.maximum(out[:, 2], out[:, 0])
    out[:, 3] = np.maximum(out[:, 3], out[:, 1])
    return out


def _random_boxes(rng: np.random.Generator, n: int, size: float, lo: float, hi: float) -> np.ndarray:
    wh = rng.uniform(lo, hi, size=(n, 2)) * size
    xy = rng.uniform(0.0, 1.0, size=(n, 2)) * (size - wh)
    return np.concatenate([xy, xy + wh], axis=1)


def gen_scenario_arrays(cfg: ScenarioConfig, seed: int) -> Scenario:
    """Seeded scenario as ``(n, 4)`` arrays."""
    if cfg.num_candidates < 1:
        raise ValueError("scenario needs at least one candidate")
    rng = np.random.default_rng(seed)
    size = float(cfg.image_size)
    gts = _random_boxes(rng, cfg.num_gts, size, 0.06, 0.2)

    n_uniform = int(round(cfg.skew * cfg.num_candidates)) if cfg.num_gts else cfg.num_candidates
    n_near = cfg.num_candidates - n_uniform
    uniform = _random_boxes(rng, n_uniform, size, 0.02, 0.1)

    near = np.empty((0, 4))
    if n_near:
        src = gts[rng.integers(0, cfg.num_gts, size=n_near)]
        w = src[:, 2] - src[:, 0]
        h = src[:, 3] - src[:, 1]
        # jitter amplitude spread evenly so overlaps cover the whole [0, 1] range
        amp = rng.uniform(0.0, 1.2, size=(n_near, 1))
        shift = rng.uniform(-1.0, 1.0, size=(n_near, 2)) * amp * np.stack([w, h], axis=1)
        scale = np.exp(rng.uniform(-1.0, 1.0, size=(n_near, 2)) * amp * 0.5)
        cx = (src[:, 0] + src[:, 2]) / 2 + shift[:, 0]
        cy = (src[:, 1] + src[:, 3]) / 2 + shift[:, 1]
        nw, nh = w * scale[:, 0], h * scale[:, 1]
        near = np.stack([cx - nw / 2, cy - nh / 2, cx + nw / 2, cy + nh / 2], axis=1)

    cands = np.concatenate([uniform, near], axis=0)
    cands = cands[rng.permutation(cands.shape[0])]
    return Scenario(ground_truths=_clip(gts, size), candidates=_clip(cands, size))


def gen_scenario(cfg: ScenarioConfig, seed: int) -> tuple[list[Box2D], list[Box2D]]:
    """Seeded ``(ground_truths, candidates)`` as :class:`Box2D` lists."""
    return gen_scenario_arrays(cfg, seed).boxes()


def load_scenario(path) -> Scenario:
    """Read ``{"ground_truths": [[x1,y1,x2,y2], ...], "candidates": [...]}``."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise OSError(f"cannot read scenario {path}: {exc}") from exc
    try:
        gts = [Box2D(*map(float, b)) for b in raw["ground_truths"]]
        cands = [Box2D(*map(float, b)) for b in raw["candidates"]]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"{path}: malformed scenario ({exc})") from exc
    if not cands:
        raise ValueError(f"{path}: scenario has no candidates")
    return Scenario(ground_truths=as_array(gts), candidates=as_array(cands))


def save_scenario(scenario: Scenario, path) -> None:
    payload = {
        "ground_truths": scenario.ground_truths.tolist(),
        "candidates": scenario.candidates.tolist(),
    }
    Path(path).write_text(json.dumps(payload, indent=1) + "\n")
