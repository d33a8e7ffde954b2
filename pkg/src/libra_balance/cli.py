"""Command-line harness: ``libra-balance <subcommand> [flags]``.

Subcommands write CSV (plus a JSON summary where noted) to ``--out`` or to
stdout. Settings resolve as: command-line flag, then ``--config`` JSON file,
then built-in default. The seed additionally falls back to the
``LIBRA_BALANCE_SEED`` environment variable before the default of 0. All
randomness is numpy's PCG64 generator seeded from ``[seed, trial, stream]``.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import itertools
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import loss as L
from .boxes import AssignConfig, Label, assign_arrays
from .gradcheck import run_suite
from .pyramid import NonLocalWeights, balanced_feature_pyramid, default_target_level, make_levels
from .sampler import HARD_IOU, SamplerConfig, bin_index, iou_balanced_select, positive_balanced_select, random_select
from .scenario import ScenarioConfig, gen_scenario_arrays, load_scenario
from .tensor import NumericFailure

SEED_ENV = "LIBRA_BALANCE_SEED"
SUBCOMMANDS = ("sample-hist", "loss-curves", "gradcheck", "pyramid-stats", "toy-fit")


@dataclass
class RunConfig:
    subcommand: str = "sample-hist"
    seed: int = 0
    trials: int = 1000
    out: str | None = None
    # scenario
    image_size: float = 512.0
    num_gts: int = 4
    num_candidates: int = 1000
    skew: float = 0.8
    scenario_path: str | None = None
    # assignment and sampling
    pos_iou_threshold: float = 0.5
    neg_iou_threshold: float = 0.5
    num_negatives: int = 384
    num_positives: int = 128
    num_bins: int = 3
    hist_bins: int = 10
    # losses
    alpha: list[float] = field(default_factory=lambda: [0.5])
    gamma: list[float] = field(default_factory=lambda: [1.5])
    lam: float = 1.0
    # pyramid
    num_levels: int = 4
    base_size: int = 32
    channels: int = 8
    target_level: int | None = None
    refine: bool = True
    # toy fit
    toy_samples: int = 256
    toy_features: int = 3
    outlier_fraction: float = 0.2
    toy_noise: float = 0.05
    steps: int = 1000
    lr: float = 0.1

    def __post_init__(self):
        if self.subcommand not in SUBCOMMANDS:
            raise ValueError(f"unknown subcommand {self.subcommand!r}")
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        self.alpha = [float(a) for a in _as_list(self.alpha)]
        self.gamma = [float(g) for g in _as_list(self.gamma)]
        for a, g in itertools.product(self.alpha, self.gamma):
            L.BalancedL1Params(a, g)
        if self.hist_bins < 1:
            raise ValueError("hist_bins must be >= 1")
        if not 0.0 <= self.outlier_fraction < 1.0:
            raise ValueError("outlier_fraction must lie in [0, 1)")
        self.assign_config()
        self.sampler_config()

    def assign_config(self) -> AssignConfig:
        return AssignConfig(self.pos_iou_threshold, self.neg_iou_threshold)

    def sampler_config(self) -> SamplerConfig:
        return SamplerConfig(
            num_negatives=self.num_negatives,
            num_bins=self.num_bins,
            bin_range=(0.0, self.neg_iou_threshold),
            num_positives=self.num_positives,
            seed=self.seed,
        )

    def scenario_config(self) -> ScenarioConfig:
        return ScenarioConfig(self.image_size, self.num_gts, self.num_candidates, self.skew)


def _as_list(v):
    if isinstance(v, str):
        return [x for x in v.split(",") if x.strip()]
    if isinstance(v, (int, float)):
        return [v]
    return list(v)


def _rng(seed: int, trial: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, trial, stream])


def _write_csv(header, rows, out) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    text = buf.getvalue()
    if out is not None:
        try:
            Path(out).write_text(text)
        except OSError as exc:
            raise OSError(f"cannot write {out}: {exc}") from exc
    return text


def _fmt(v: float) -> str:
    return f"{v:.10f}"


# ---------------------------------------------------------------- sample-hist


def sample_histogram(cfg: RunConfig) -> tuple[list[list], dict]:
    """Run random and IoU-balanced sampling over ``cfg.trials`` scenarios.

    Returns histogram rows ``[lo, hi, random, balanced, pool]`` and a summary.
    """
    acfg = cfg.assign_config()
    scfg = cfg.sampler_config()
    fixed = load_scenario(cfg.scenario_path) if cfg.scenario_path else None
    hist_range = scfg.bin_range
    pool_h = np.zeros(cfg.hist_bins, dtype=np.int64)
    rand_h = np.zeros(cfg.hist_bins, dtype=np.int64)
    bal_h = np.zeros(cfg.hist_bins, dtype=np.int64)
    rand_frac, bal_frac, pool_frac = [], [], []
    pos_selected, pos_gap = 0, []

    for trial in range(cfg.trials):
        scen = fixed if fixed is not None else gen_scenario_arrays(cfg.scenario_config(), [cfg.seed, trial])
        gt_index, overlaps, labels = assign_arrays(scen.candidates, scen.ground_truths, acfg)
        neg = overlaps[labels == int(Label.NEGATIVE)]
        r_pos = random_select(neg.size, scfg.num_negatives, _rng(cfg.seed, trial, 0))
        b_pos, _, _ = iou_balanced_select(neg, scfg.num_negatives, scfg.num_bins, scfg.bin_range, _rng(cfg.seed, trial, 1))

        hb = bin_index(neg, cfg.hist_bins, hist_range)
        pool_h += np.bincount(hb, minlength=cfg.hist_bins)
        rand_h += np.bincount(hb[r_pos], minlength=cfg.hist_bins)
        bal_h += np.bincount(hb[b_pos], minlength=cfg.hist_bins)
        if neg.size:
            pool_frac.append(float(np.mean(neg >= HARD_IOU)))
            rand_frac.append(float(np.mean(neg[r_pos] >= HARD_IOU)))
            bal_frac.append(float(np.mean(neg[b_pos] >= HARD_IOU)))

        pos_gt = gt_index[labels == int(Label.POSITIVE)]
        if pos_gt.size:
            _, _, _, take = positive_balanced_select(pos_gt, scfg.num_positives, _rng(cfg.seed, trial, 2))
            pos_selected += sum(take)
            pos_gap.append(max(take) - min(take))

    lo, hi = hist_range
    edges = np.linspace(lo, hi, cfg.hist_bins + 1)
    rows = [
        [_fmt(edges[k]), _fmt(edges[k + 1]), int(rand_h[k]), int(bal_h[k]), int(pool_h[k])]
        for k in range(cfg.hist_bins)
    ]

    def mean(xs):
        return float(np.mean(xs)) if xs else 0.0

    summary = {
        "trials": cfg.trials,
        "seed": cfg.seed,
        "num_negatives": scfg.num_negatives,
        "num_bins": scfg.num_bins,
        "bin_range": list(scfg.bin_range),
        "hard_iou": HARD_IOU,
        "trials_with_negatives": len(pool_frac),
        "pool_hard_fraction": mean(pool_frac),
        "pool_easy_fraction": 1.0 - mean(pool_frac) if pool_frac else 0.0,
        "random_hard_fraction": mean(rand_frac),
        "balanced_hard_fraction": mean(bal_frac),
        "random_selected": int(rand_h.sum()),
        "balanced_selected": int(bal_h.sum()),
        "positives_selected": pos_selected,
        "positive_gt_gap_mean": mean(pos_gap),
    }
    return rows, summary


def cmd_sample_hist(cfg: RunConfig) -> int:
    rows, summary = sample_histogram(cfg)
    text = _write_csv(["iou_bin_lo", "iou_bin_hi", "random_count", "balanced_count", "pool_count"], rows, cfg.out)
    blob = json.dumps(summary, indent=2, sort_keys=True) + "\n"
    if cfg.out is None:
        sys.stdout.write(text)
        sys.stdout.write(blob)
    else:
        Path(cfg.out).with_suffix(".json").write_text(blob)
    return 0


# ---------------------------------------------------------------- loss-curves

CURVE_HEADER = ["x", "smooth_l1_loss", "smooth_l1_grad", "balanced_l1_loss", "balanced_l1_grad"]


def loss_curve_rows(params: L.BalancedL1Params) -> list[list[str]]:
    """Rows over ``x = 0.00 .. 2.00`` in steps of 0.01."""
    xs = np.arange(201) / 100.0
    cols = (L.smooth_l1(xs), L.smooth_l1_grad(xs), L.balanced_l1(xs, params), L.balanced_l1_grad(xs, params))
    return [[f"{x:.2f}", *(_fmt(c[i]) for c in cols)] for i, x in enumerate(xs)]


def curve_paths(cfg: RunConfig) -> list[tuple[L.BalancedL1Params, str | None]]:
    pairs = [L.BalancedL1Params(a, g) for a, g in itertools.product(cfg.alpha, cfg.gamma)]
    if cfg.out is None or len(pairs) == 1:
        return [(p, cfg.out) for p in pairs]
    out = Path(cfg.out)
    return [(p, str(out.with_name(f"{out.stem}_a{p.alpha:g}_g{p.gamma:g}{out.suffix}"))) for p in pairs]


def cmd_loss_curves(cfg: RunConfig) -> int:
    for params, path in curve_paths(cfg):
        text = _write_csv(CURVE_HEADER, loss_curve_rows(params), path)
        if path is None:
            sys.stdout.write(f"# alpha={params.alpha:g} gamma={params.gamma:g}\n")
            sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------- gradcheck


def cmd_gradcheck(cfg: RunConfig) -> int:
    results = run_suite(cfg.seed, params=L.BalancedL1Params(cfg.alpha[0], cfg.gamma[0]))
    rows = [[r.op, f"{r.max_rel_err:.6e}", f"{r.tolerance:.0e}", "pass" if r.passed else "FAIL"] for r in results]
    text = _write_csv(["op", "max_rel_err", "tolerance", "status"], rows, cfg.out)
    if cfg.out is None:
        sys.stdout.write(text)
    failed = [r.op for r in results if not r.passed]
    if failed:
        print(f"gradcheck failed: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------- pyramid-stats


def pyramid_stats_rows(cfg: RunConfig) -> list[list]:
    pyr = make_levels(cfg.num_levels, cfg.base_size, cfg.channels, seed=cfg.seed)
    weights = NonLocalWeights.random(cfg.channels, seed=[cfg.seed, 4]) if cfg.refine else None
    target = default_target_level(cfg.num_levels) if cfg.target_level is None else cfg.target_level
    out = balanced_feature_pyramid(pyr, weights, target)
    rows = []
    for lvl, (before, after) in enumerate(zip(pyr.levels, out.levels)):
        _, h, w = before.shape
        rows.append(
            [lvl, h, w, _fmt(before.data.mean()), _fmt(before.data.var()), _fmt(after.data.mean()), _fmt(after.data.var())]
        )
    return rows


def cmd_pyramid_stats(cfg: RunConfig) -> int:
    header = ["level", "height", "width", "mean_before", "var_before", "mean_after", "var_after"]
    text = _write_csv(header, pyramid_stats_rows(cfg), cfg.out)
    if cfg.out is None:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------- toy-fit


def toy_fit(cfg: RunConfig) -> list[list]:
    """Fit a linear offset regressor with smooth L1 and balanced L1 side by side.

    Targets are ``W* f`` plus inlier noise; a fraction of samples get a large
    corruption. Both runs start from zero weights and use the same step size.
    Returns rows ``[step, smooth_err, balanced_err]`` where the error is the
    mean absolute deviation from the clean targets over inlier samples.
    """
    rng = _rng(cfg.seed, 0, 3)
    n, d = cfg.toy_samples, cfg.toy_features
    feats = np.concatenate([rng.uniform(-1.0, 1.0, (n, d - 1)), np.ones((n, 1))], axis=1) if d > 1 else np.ones((n, 1))
    w_true = rng.normal(0.0, 0.5, (4, d))
    clean = feats @ w_true.T
    targets = clean + rng.normal(0.0, cfg.toy_noise, clean.shape) if cfg.toy_noise > 0 else clean.copy()
    n_out = int(round(cfg.outlier_fraction * n))
    outliers = rng.choice(n, size=n_out, replace=False)
    targets[outliers] += rng.normal(0.0, 5.0, (n_out, 4))
    inlier = np.ones(n, dtype=bool)
    inlier[outliers] = False

    params = L.BalancedL1Params(cfg.alpha[0], cfg.gamma[0])
    grads = {"smooth": L.smooth_l1_grad, "balanced": lambda r: L.balanced_l1_grad(r, params)}
    losses = {"smooth": L.smooth_l1, "balanced": lambda r: L.balanced_l1(r, params)}
    weights = {k: np.zeros((4, d)) for k in grads}
    rows = []
    # overflow is detected explicitly below and reported as NumericFailure
    with np.errstate(over="ignore", invalid="ignore"):
        for step in range(cfg.steps + 1):
            errs = []
            for k in ("smooth", "balanced"):
                pred = feats @ weights[k].T
                errs.append(float(np.mean(np.abs(pred - clean)[inlier])))
                resid = pred - targets
                if not np.isfinite(np.sum(losses[k](resid))):
                    raise NumericFailure(f"{k} L1 fit diverged at step {step}")
                weights[k] = weights[k] - cfg.lr * (grads[k](resid).T @ feats) / n
            rows.append([step, f"{errs[0]:.10e}", f"{errs[1]:.10e}"])
    return rows


def cmd_toy_fit(cfg: RunConfig) -> int:
    try:
        rows = toy_fit(cfg)
    except NumericFailure as exc:
        print(f"toy-fit: {exc}", file=sys.stderr)
        return 2
    text = _write_csv(["step", "smooth_l1_inlier_err", "balanced_l1_inlier_err"], rows, cfg.out)
    if cfg.out is None:
        sys.stdout.write(text)
    return 0


COMMANDS = {
    "sample-hist": cmd_sample_hist,
    "loss-curves": cmd_loss_curves,
    "gradcheck": cmd_gradcheck,
    "pyramid-stats": cmd_pyramid_stats,
    "toy-fit": cmd_toy_fit,
}


# ---------------------------------------------------------------- argument parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of RunConfig fields")
    common.add_argument("--seed", type=int)
    common.add_argument("--trials", type=int)
    common.add_argument("--out")
    common.add_argument("--alpha", help="comma-separated list")
    common.add_argument("--gamma", help="comma-separated list")
    common.add_argument("--bins", type=int, dest="num_bins")
    common.add_argument("--neg-count", type=int, dest="num_negatives")
    common.add_argument("--pos-count", type=int, dest="num_positives")
    common.add_argument("--refine", choices=("on", "off"))

    parser = argparse.ArgumentParser(prog="libra-balance", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def resolve_config(args: argparse.Namespace, environ=None) -> RunConfig:
    environ = os.environ if environ is None else environ
    values: dict = {}
    if args.config:
        try:
            values.update(json.loads(Path(args.config).read_text()))
        except OSError as exc:
            raise OSError(f"cannot read config {args.config}: {exc}") from exc
        known = {f.name for f in dataclasses.fields(RunConfig)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ValueError(f"{args.config}: unknown config keys {unknown}")
    if "seed" not in values and args.seed is None and environ.get(SEED_ENV):
        values["seed"] = int(environ[SEED_ENV])
    for key in ("seed", "trials", "out", "alpha", "gamma", "num_bins", "num_negatives", "num_positives"):
        v = getattr(args, key)
        if v is not None:
            values[key] = v
    if args.refine is not None:
        values["refine"] = args.refine == "on"
    values["subcommand"] = args.subcommand
    return RunConfig(**values)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        return COMMANDS[cfg.subcommand](cfg)
    except (ValueError, OSError) as exc:
        print(f"libra-balance {args.subcommand}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
