"""Reading and writing result tables and per-episode logs."""

from __future__ import annotations

import csv
import io
import os
from typing import List

import numpy as np

from .agent import EpisodeLog, StepRecord
from .contact import Outcome
from .experiments import ResultRow, ResultTable

VECTOR_FIELDS = ("u_H", "u_RL", "command", "wrench")
LOG_COLUMNS: List[str] = (
    ["step", "state_index", "action_id"]
    + [f"{name}_{i}" for name in VECTOR_FIELDS for i in range(6)]
    + ["reward", "belief", "probed", "outcome"]
)
RESULT_COLUMNS = ["name", "condition", "successes", "total", "rate", "mean_steps"]


def _write(path: str, text: str) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def _read(path: str) -> str:
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            return fh.read()
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror}") from exc


def _num(x: float) -> str:
    return repr(float(x))


def log_to_csv(log: EpisodeLog) -> str:
    """One row per step. Wall time is left out so equal seeds give equal bytes."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LOG_COLUMNS)
    for r in log.steps:
        row = [r.step, r.state_index, r.action_id]
        for name in VECTOR_FIELDS:
            row += [_num(v) for v in getattr(r, name)]
        row += [_num(r.reward), int(r.belief), int(r.probed), log.outcome.value]
        w.writerow(row)
    return buf.getvalue()


def log_from_csv(text: str) -> EpisodeLog:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != LOG_COLUMNS:
        raise ValueError("episode log header does not match the expected columns")
    log = EpisodeLog()
    for raw in rows[1:]:
        if len(raw) != len(LOG_COLUMNS):
            raise ValueError(f"episode log row has {len(raw)} fields, expected {len(LOG_COLUMNS)}")
        d = dict(zip(LOG_COLUMNS, raw))
        vecs = {
            name: np.array([float(d[f"{name}_{i}"]) for i in range(6)]) for name in VECTOR_FIELDS
        }
        log.steps.append(
            StepRecord(
                step=int(d["step"]),
                state_index=int(d["state_index"]),
                action_id=int(d["action_id"]),
                reward=float(d["reward"]),
                belief=bool(int(d["belief"])),
                probed=bool(int(d["probed"])),
                **vecs,
            )
        )
        log.outcome = Outcome(d["outcome"])
    return log


def save_log(log: EpisodeLog, path: str) -> None:
    _write(path, log_to_csv(log))


def load_log(path: str) -> EpisodeLog:
    return log_from_csv(_read(path))


def results_to_text(table: ResultTable) -> str:
    header = ["condition", "name", "success", "rate", "mean steps", "wall s"]
    body = [
        [r.condition, r.name, f"{r.successes}/{r.total}", f"{100.0 * r.rate:.1f}%",
         f"{r.mean_steps:.2f}", f"{r.wall_time:.1f}"]
        for r in table.rows
    ]
    widths = [max(len(str(x)) for x in col) for col in zip(header, *body)]
    lines = [table.title, ""]
    for row in [header] + body:
        lines.append("  ".join(str(x).ljust(wd) for x, wd in zip(row, widths)).rstrip())
    return "\n".join(lines) + "\n"


def results_to_csv(table: ResultTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for r in table.rows:
        w.writerow([r.name, r.condition, r.successes, r.total, f"{r.rate:.4f}", f"{r.mean_steps:.4f}"])
    return buf.getvalue()


def results_from_csv(text: str, title: str = "") -> ResultTable:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != RESULT_COLUMNS:
        raise ValueError("results header does not match the expected columns")
    table = ResultTable(title)
    for raw in rows[1:]:
        d = dict(zip(RESULT_COLUMNS, raw))
        table.rows.append(
            ResultRow(d["name"], d["condition"], int(d["successes"]), int(d["total"]), float(d["mean_steps"]))
        )
    return table


def save_results(table: ResultTable, out_dir: str) -> None:
    """Write ``results.txt`` (aligned, with timings) and ``results.csv`` (no timings)."""
    os.makedirs(out_dir, exist_ok=True)
    _write(os.path.join(out_dir, "results.txt"), results_to_text(table))
    _write(os.path.join(out_dir, "results.csv"), results_to_csv(table))


def load_results(path: str) -> ResultTable:
    return results_from_csv(_read(path))


def save_episodes(logs: List[EpisodeLog], out_dir: str) -> None:
    folder = os.path.join(out_dir, "episodes")
    os.makedirs(folder, exist_ok=True)
    for i, log in enumerate(logs):
        save_log(log, os.path.join(folder, f"{i:03d}.csv"))
