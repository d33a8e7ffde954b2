import numpy as np
import pytest

from libra_balance.boxes import AssignConfig, Label, assign_arrays
from libra_balance.scenario import ScenarioConfig, gen_scenario, gen_scenario_arrays, load_scenario, save_scenario


def test_zero_candidates_rejected():
    with pytest.raises(ValueError):
        ScenarioConfig(num_candidates=0)


def test_same_seed_same_scenario():
    a = gen_scenario_arrays(ScenarioConfig(), 17)
    b = gen_scenario_arrays(ScenarioConfig(), 17)
    np.testing.assert_array_equal(a.candidates, b.candidates)
    np.testing.assert_array_equal(a.ground_truths, b.ground_truths)
    assert not np.array_equal(a.candidates, gen_scenario_arrays(ScenarioConfig(), 18).candidates)


def test_boxes_are_valid_and_inside_image():
    gts, cands = gen_scenario(ScenarioConfig(image_size=100, num_candidates=50), 3)
    assert len(gts) == 4 and len(cands) == 50
    for b in gts + cands:
        assert 0 <= b.x1 <= b.x2 <= 100 and 0 <= b.y1 <= b.y2 <= 100


def test_no_ground_truths_means_uniform_pool():
    s = gen_scenario_arrays(ScenarioConfig(num_gts=0, num_candidates=20), 0)
    assert s.ground_truths.shape == (0, 4) and s.candidates.shape == (20, 4)


def test_skewed_pool_is_mostly_easy():
    fractions = []
    for seed in range(1000):
        s = gen_scenario_arrays(ScenarioConfig(skew=0.8), seed)
        _, overlaps, labels = assign_arrays(s.candidates, s.ground_truths, AssignConfig())
        neg = overlaps[labels == int(Label.NEGATIVE)]
        fractions.append(np.mean(neg < 0.05))
    assert np.mean(fractions) >= 0.70


def test_json_round_trip(tmp_path):
    s = gen_scenario_arrays(ScenarioConfig(num_candidates=30), 5)
    path = tmp_path / "scene.json"
    save_scenario(s, path)
    back = load_scenario(path)
    np.testing.assert_array_equal(back.candidates, s.candidates)
    np.testing.assert_array_equal(back.ground_truths, s.ground_truths)


def test_load_errors(tmp_path):
    with pytest.raises(OSError):
        load_scenario(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text('{"ground_truths": []}')
    with pytest.raises(ValueError):
        load_scenario(bad)
    empty = tmp_path / "empty.json"
    empty.write_text('{"ground_truths": [], "candidates": []}')
    with pytest.raises(ValueError):
        load_scenario(empty)
