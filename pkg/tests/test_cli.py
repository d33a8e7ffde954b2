import csv
import json

import numpy as np
import pytest

from libra_balance import cli
from libra_balance.gradcheck import GradcheckResult

FAST = {
    "sample-hist": ["--trials", "20"],
    "loss-curves": [],
    "gradcheck": [],
    "pyramid-stats": [],
    "toy-fit": [],
}


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.mark.parametrize("sub", cli.SUBCOMMANDS)
def test_byte_identical_reruns(sub, tmp_path):
    outs = []
    for run in range(2):
        out = tmp_path / f"{run}.csv"
        assert cli.main([sub, "--seed", "7", "--out", str(out), *FAST[sub]]) == 0
        outs.append(out.read_bytes())
        assert outs[-1].endswith(b"\n")
    assert outs[0] == outs[1]


def test_stdout_when_no_out(capsys):
    assert cli.main(["pyramid-stats", "--seed", "1"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "level,height,width,mean_before,var_before,mean_after,var_after"
    assert len(lines) == 5


class TestSampleHist:
    def test_schema_and_summary(self, tmp_path):
        out = tmp_path / "hist.csv"
        assert cli.main(["sample-hist", "--trials", "30", "--out", str(out)]) == 0
        rows = read_csv(out)
        assert rows[0] == ["iou_bin_lo", "iou_bin_hi", "random_count", "balanced_count", "pool_count"]
        assert len(rows) == 11
        summary = json.loads(out.with_suffix(".json").read_text())
        assert summary["balanced_hard_fraction"] > summary["random_hard_fraction"]
        assert summary["random_selected"] == summary["balanced_selected"]

    def test_single_bin_matches_random(self):
        cfg = cli.RunConfig(trials=200, num_bins=1)
        _, s = cli.sample_histogram(cfg)
        # same selection law; streams differ, so compare within Monte-Carlo noise
        assert abs(s["balanced_hard_fraction"] - s["random_hard_fraction"]) < 0.02

    def test_empty_negative_pool(self, tmp_path):
        scene = tmp_path / "scene.json"
        box = [10.0, 10.0, 50.0, 50.0]
        scene.write_text(json.dumps({"ground_truths": [box], "candidates": [box, box]}))
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"scenario_path": str(scene)}))
        out = tmp_path / "hist.csv"
        assert cli.main(["sample-hist", "--config", str(cfg), "--trials", "3", "--out", str(out)]) == 0
        rows = read_csv(out)[1:]
        assert all(r[2:] == ["0", "0", "0"] for r in rows)
        summary = json.loads(out.with_suffix(".json").read_text())
        assert summary["positives_selected"] == 6

    def test_missing_scenario_file(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"scenario_path": str(tmp_path / "nope.json")}))
        assert cli.main(["sample-hist", "--config", str(cfg)]) == 2
        assert "nope.json" in capsys.readouterr().err


class TestLossCurves:
    def rows(self, tmp_path, *extra):
        out = tmp_path / "curves.csv"
        assert cli.main(["loss-curves", "--out", str(out), *extra]) == 0
        return read_csv(out)

    def test_grid_and_values(self, tmp_path):
        rows = self.rows(tmp_path)
        assert rows[0] == cli.CURVE_HEADER
        body = rows[1:]
        assert len(body) == 201 and body[0][0] == "0.00" and body[-1][0] == "2.00"
        at_one = next(r for r in body if r[0] == "1.00")
        assert float(at_one[4]) == 1.5
        assert float(body[0][2]) == 0.0 and float(body[0][4]) == 0.0
        grads = [float(r[4]) for r in body]
        assert all(b >= a for a, b in zip(grads, grads[1:]))

    def test_multiple_pairs_write_one_file_each(self, tmp_path):
        assert cli.main(["loss-curves", "--alpha", "0.2,0.5", "--gamma", "1.5", "--out", str(tmp_path / "c.csv")]) == 0
        names = sorted(p.name for p in tmp_path.iterdir())
        assert names == ["c_a0.2_g1.5.csv", "c_a0.5_g1.5.csv"]

    def test_invalid_parameters(self, capsys):
        assert cli.main(["loss-curves", "--alpha", "-1"]) == 2
        assert "alpha" in capsys.readouterr().err


class TestGradcheck:
    def test_passes(self, tmp_path):
        out = tmp_path / "g.csv"
        assert cli.main(["gradcheck", "--out", str(out)]) == 0
        rows = read_csv(out)
        assert rows[0] == ["op", "max_rel_err", "tolerance", "status"]
        assert {r[3] for r in rows[1:]} == {"pass"}
        ops = {r[0] for r in rows[1:]}
        assert {"balanced_l1", "localization_loss", "multi_task_loss", "balanced_feature_pyramid"} <= ops

    def test_failure_sets_exit_code(self, monkeypatch, capsys):
        monkeypatch.setattr(cli, "run_suite", lambda *a, **k: [GradcheckResult("bogus", 1.0, 1e-6)])
        assert cli.main(["gradcheck"]) == 1
        assert "bogus" in capsys.readouterr().err


class TestPyramidStats:
    def test_refine_toggle(self, tmp_path):
        on, off = tmp_path / "on.csv", tmp_path / "off.csv"
        assert cli.main(["pyramid-stats", "--refine", "on", "--out", str(on)]) == 0
        assert cli.main(["pyramid-stats", "--refine", "off", "--out", str(off)]) == 0
        a, b = read_csv(on), read_csv(off)
        assert [r[:5] for r in a] == [r[:5] for r in b]
        assert a != b
        assert [r[1:3] for r in a[1:]] == [["32", "32"], ["16", "16"], ["8", "8"], ["4", "4"]]


class TestToyFit:
    def test_realizable_target(self):
        rows = cli.toy_fit(cli.RunConfig(subcommand="toy-fit", toy_noise=0.0, outlier_fraction=0.0))
        assert float(rows[-1][1]) < 1e-6 and float(rows[-1][2]) < 1e-6

    def test_outliers_favour_balanced(self):
        rows = cli.toy_fit(cli.RunConfig(subcommand="toy-fit"))
        assert float(rows[-1][2]) <= float(rows[-1][1])

    def test_divergence_reported(self, capsys):
        with pytest.raises(cli.NumericFailure):
            cli.toy_fit(cli.RunConfig(subcommand="toy-fit", lr=1e308, steps=50))
        cfg = cli.RunConfig(subcommand="toy-fit", lr=1e308, steps=50)
        assert cli.cmd_toy_fit(cfg) == 2
        assert "diverged" in capsys.readouterr().err


class TestConfig:
    def parse(self, argv, environ=None):
        return cli.resolve_config(cli.build_parser().parse_args(argv), environ or {})

    def test_defaults(self):
        cfg = self.parse(["toy-fit"])
        assert cfg.seed == 0 and cfg.trials == 1000 and cfg.alpha == [0.5] and cfg.gamma == [1.5]

    def test_precedence(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"seed": 5, "trials": 7, "num_bins": 4}))
        cfg = self.parse(["sample-hist", "--config", str(path), "--trials", "9"], {cli.SEED_ENV: "11"})
        assert (cfg.seed, cfg.trials, cfg.num_bins) == (5, 9, 4)

    def test_env_seed_fallback(self):
        assert self.parse(["gradcheck"], {cli.SEED_ENV: "42"}).seed == 42
        assert self.parse(["gradcheck", "--seed", "3"], {cli.SEED_ENV: "42"}).seed == 3

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"sed": 1}))
        with pytest.raises(ValueError, match="sed"):
            self.parse(["gradcheck", "--config", str(path)])

    @pytest.mark.parametrize("argv", [["toy-fit", "--trials", "0"], ["toy-fit", "--seed", "-1"], ["toy-fit", "--bins", "0"]])
    def test_invalid_values_exit_2(self, argv):
        assert cli.main(argv) == 2

    def test_seed_changes_output(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        cli.main(["pyramid-stats", "--seed", "1", "--out", str(a)])
        cli.main(["pyramid-stats", "--seed", "2", "--out", str(b)])
        assert a.read_bytes() != b.read_bytes()


def test_console_script_entry(tmp_path):
    import subprocess
    import sys

    out = tmp_path / "c.csv"
    proc = subprocess.run([sys.executable, "-m", "libra_balance.cli", "loss-curves", "--out", str(out)], capture_output=True)
    assert proc.returncode == 0
    assert np.isclose(float(read_csv(out)[101][4]), 1.5)
