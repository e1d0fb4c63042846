import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from resid_insert.agent import QTable
from resid_insert.config import ExperimentConfig, preset
from resid_insert.contact import Outcome
from resid_insert.experiments import (
    ResultRow,
    run_ablation,
    run_comparison,
    sample_board_offset,
    spiral_coverage_steps,
    spiral_search_policy,
)


def test_spiral_origin():
    assert np.array_equal(spiral_search_policy(0, 0.0002, math.pi / 4), [0.0, 0.0])


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 500), st.floats(1e-5, 1e-3), st.sampled_from([math.pi / 8, math.pi / 4, math.pi / 2]))
def test_spiral_grows_one_pitch_per_turn(k, pitch, dtheta):
    per_turn = int(round(2 * math.pi / dtheta))
    r0 = np.linalg.norm(spiral_search_policy(k, pitch, dtheta))
    r1 = np.linalg.norm(spiral_search_policy(k + per_turn, pitch, dtheta))
    assert abs((r1 - r0) - pitch) <= 1e-12


def test_spiral_rejects_bad_pitch():
    with pytest.raises(ValueError):
        spiral_search_policy(1, 0.0, 1.0)


@pytest.mark.parametrize("radius", [0.0005, 0.001, 0.0023])
def test_spiral_coverage_count(radius):
    pitch, dtheta = 0.0002, math.pi / 4
    n = spiral_coverage_steps(radius, pitch, dtheta)
    assert n == math.ceil((radius / pitch) * 2 * math.pi / dtheta)
    assert np.linalg.norm(spiral_search_policy(n, pitch, dtheta)) >= radius - 1e-15
    assert np.linalg.norm(spiral_search_policy(n - 1, pitch, dtheta)) < radius


def test_board_offset_within_range():
    rng = np.random.default_rng(0)
    for _ in range(100):
        off = sample_board_offset(rng, (0.010, 0.030))
        r = np.linalg.norm(off.t[:2])
        assert 0.010 - 1e-12 <= r <= 0.030 + 1e-12 and off.t[2] == 0.0


def test_result_row_validation():
    with pytest.raises(ValueError):
        ResultRow("x", "", 5, 4, 1.0)
    assert ResultRow("x", "", 3, 4, 1.0).rate == 0.75


@pytest.fixture(scope="module")
def small():
    cfg = replace(preset(), trials=6, train_episodes=30, blind_trials=3)
    q = QTable.random(np.random.default_rng(0))
    return cfg, q


def test_ablation_counts_match_logs_and_repeat(small):
    cfg, q = small
    table, logs = run_ablation(cfg, q, seed=3)
    again, _ = run_ablation(cfg, q, seed=3)
    assert table.counts() == again.counts()
    assert [r.name for r in table.rows] == ["full", "no_vision", "no_rl", "random_rl", "no_probe"]
    for r in table.rows:
        assert r.successes == sum(t.outcome == Outcome.SUCCESS for t in logs[r.name])
        assert r.total == cfg.trials
        for t in logs[r.name]:
            assert len(t.log.steps) <= 10
            assert [s.step for s in t.log.steps] == list(range(1, len(t.log.steps) + 1))


def test_parallel_matches_serial(small):
    cfg, q = small
    serial, _ = run_ablation(cfg, q, seed=4)
    parallel, _ = run_ablation(replace(cfg, workers=2), q, seed=4)
    assert serial.counts() == parallel.counts()
    assert [r.mean_steps for r in serial.rows] == [r.mean_steps for r in parallel.rows]


def test_comparison_fixed_board_blind_equals_vision_without_noise():
    # with no board motion and noiseless vision, correcting the pose changes nothing
    cfg = replace(preset(), trials=3).without_noise()
    table, _ = run_comparison(cfg, QTable(), seed=1, names=("baseline1", "baseline3"))
    assert table.row("baseline1", "fixed").successes == table.row("baseline3", "fixed").successes == 3


def test_comparison_blind_baselines_use_blind_trial_count():
    cfg = replace(preset(), trials=4, blind_trials=2)
    table, logs = run_comparison(cfg, QTable(), seed=2, names=("baseline1",))
    assert table.row("baseline1", "moved").total == 2
    assert table.row("baseline1", "moved").successes == 0
    assert len(logs["baseline1/fixed"]) == 4


def test_comparison_rejects_unknown_name():
    with pytest.raises(ValueError):
        run_comparison(ExperimentConfig(trials=1), QTable(), names=("baseline7",))
