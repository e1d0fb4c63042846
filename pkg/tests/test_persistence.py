import numpy as np
import pytest

from resid_insert.agent import EpisodeLog, StepRecord
from resid_insert.contact import Outcome
from resid_insert.experiments import ResultRow, ResultTable
from resid_insert.persistence import (
    LOG_COLUMNS,
    load_log,
    load_results,
    log_from_csv,
    log_to_csv,
    results_to_csv,
    results_to_text,
    save_episodes,
    save_log,
    save_results,
)


def _log():
    rng = np.random.default_rng(0)
    log = EpisodeLog(outcome=Outcome.SUCCESS, wall_time=1.25)
    for k in range(1, 4):
        log.steps.append(
            StepRecord(k, 364 + k, k % 6, rng.normal(size=6), rng.normal(size=6), rng.normal(size=6),
                       rng.normal(size=6), 0.1 * k, k != 2, k == 2)
        )
    return log


def _table():
    return ResultTable("Ablation", [ResultRow("full", "", 180, 200, 6.5, 12.3), ResultRow("no_rl", "", 90, 200, 9.1, 4.0)])


def test_log_round_trip_is_exact(tmp_path):
    log = _log()
    path = tmp_path / "e.csv"
    save_log(log, str(path))
    back = load_log(str(path))
    assert back.outcome == log.outcome and back.n_steps == 3
    for a, b in zip(log.steps, back.steps):
        assert (a.step, a.state_index, a.action_id, a.belief, a.probed) == (b.step, b.state_index, b.action_id, b.belief, b.probed)
        assert a.reward == b.reward
        for name in ("u_H", "u_RL", "command", "wrench"):
            assert np.array_equal(getattr(a, name), getattr(b, name))


def test_log_csv_omits_wall_time():
    a, b = _log(), _log()
    b.wall_time = 99.0
    assert log_to_csv(a) == log_to_csv(b)
    assert log_to_csv(a).splitlines()[0].split(",") == LOG_COLUMNS


def test_log_rejects_bad_header_and_rows():
    text = log_to_csv(_log())
    with pytest.raises(ValueError):
        log_from_csv("a,b\n")
    lines = text.splitlines()
    with pytest.raises(ValueError):
        log_from_csv("\n".join(lines[:2] + [lines[2] + ",9"]))


def test_results_files(tmp_path):
    table = _table()
    save_results(table, str(tmp_path))
    txt = (tmp_path / "results.txt").read_text()
    assert "180/200" in txt and "90.0%" in txt
    csv_text = (tmp_path / "results.csv").read_text()
    assert csv_text.splitlines()[0] == "name,condition,successes,total,rate,mean_steps"
    assert "12.3" not in csv_text
    back = load_results(str(tmp_path / "results.csv"))
    assert back.counts() == table.counts()


def test_results_text_is_aligned():
    lines = results_to_text(_table()).splitlines()[2:]
    starts = {line.index("success") if "success" in line else line.index("180/200" if "full" in line else "90/200") for line in lines}
    assert len(starts) == 1


def test_results_csv_ignores_timing():
    a = _table()
    b = ResultTable("Ablation", [ResultRow(r.name, r.condition, r.successes, r.total, r.mean_steps, 99.0) for r in a.rows])
    assert results_to_csv(a) == results_to_csv(b)


def test_episode_files_are_numbered(tmp_path):
    save_episodes([_log(), _log()], str(tmp_path))
    names = sorted(p.name for p in (tmp_path / "episodes").iterdir())
    assert names == ["000.csv", "001.csv"]


def test_unwritable_path_reports_clearly(tmp_path):
    with pytest.raises(OSError, match="cannot write"):
        save_log(_log(), str(tmp_path / "missing" / "e.csv"))
