"""Evaluation protocols: the five-way ablation and the baseline comparison."""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .agent import (
    AgentConfig,
    EpisodeLog,
    QTable,
    StepRecord,
    TaskSetup,
    TrainingResult,
    encode_state,
    rough_locate,
    run_episode,
    train,
)
from .config import ABLATIONS, BASELINES, ExperimentConfig, ablation_config, comparison_config
from .contact import (
    Outcome,
    SafetyStop,
    WorldState,
    check_outcome,
    estimate_external_wrench,
    goal_pose,
    sample_initial_condition,
    step_quasi_static,
)
from .rng import RngStreams
from .transforms import Pose, compose

# step indices of the substreams, so every condition gets its own numbers
_TRAIN_STREAM = 0
_EVAL_STREAM = 1
_FIXED_STREAM = 2
_MOVED_STREAM = 3


def spiral_search_policy(step: int, pitch: float, angular_step: float) -> np.ndarray:
    """Archimedean spiral offset ``r = pitch * theta / 2 pi`` at ``theta = step * angular_step``."""
    if pitch <= 0.0:
        raise ValueError("pitch must be positive")
    theta = step * angular_step
    r = pitch * theta / (2.0 * math.pi)
    return np.array([r * math.cos(theta), r * math.sin(theta)])


def spiral_coverage_steps(radius: float, pitch: float, angular_step: float) -> int:
    """Steps until the spiral radius first reaches ``radius``."""
    return int(math.ceil((radius / pitch) * 2.0 * math.pi / angular_step))


# ---------------------------------------------------------------------------
# results


@dataclass(frozen=True)
class ResultRow:
    name: str
    condition: str
    successes: int
    total: int
    mean_steps: float
    wall_time: float = 0.0

    def __post_init__(self) -> None:
        if not 0 <= self.successes <= self.total:
            raise ValueError("successes must be within [0, total]")

    @property
    def rate(self) -> float:
        return self.successes / self.total if self.total else 0.0


@dataclass
class ResultTable:
    title: str
    rows: List[ResultRow] = field(default_factory=list)

    def row(self, name: str, condition: str = "") -> ResultRow:
        for r in self.rows:
            if r.name == name and (not condition or r.condition == condition):
                return r
        raise KeyError(f"no row {name!r} {condition!r}")

    def counts(self) -> Dict[Tuple[str, str], Tuple[int, int]]:
        return {(r.name, r.condition): (r.successes, r.total) for r in self.rows}


@dataclass
class TrialResult:
    index: int
    outcome: Outcome
    n_steps: int
    log: EpisodeLog


def _summarise(name: str, condition: str, trials: Sequence[TrialResult], wall: float) -> ResultRow:
    succ = sum(t.outcome == Outcome.SUCCESS for t in trials)
    mean = float(np.mean([t.n_steps for t in trials])) if trials else 0.0
    return ResultRow(name, condition, succ, len(trials), mean, wall)


# ---------------------------------------------------------------------------
# running many trials


def _map_trials(fn: Callable[..., TrialResult], args: List[tuple], workers: int) -> List[TrialResult]:
    """Run ``fn(*a)`` for each argument tuple, serially or across processes.

    Each trial seeds itself from its index, so the order of completion is
    irrelevant; results come back sorted by index either way.
    """
    if workers <= 1 or len(args) <= 1:
        out = [fn(*a) for a in args]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(fn, *zip(*args), chunksize=max(1, len(args) // (4 * workers))))
    return sorted(out, key=lambda t: t.index)


def training_env(cfg: ExperimentConfig, setup: TaskSetup) -> Callable[[int, RngStreams], WorldState]:
    def factory(i: int, streams: RngStreams) -> WorldState:
        return sample_initial_condition(
            streams.world, cfg.initial_error_range, setup.geometry, setup.start_height, seed=i
        )

    return factory


def train_agent(cfg: ExperimentConfig, seed: int) -> TrainingResult:
    setup = cfg.task()
    agent = replace(cfg.agent, s_max=cfg.train_max_steps)
    return train(training_env(cfg, setup), agent, cfg.train_episodes, seed, setup)


# ---------------------------------------------------------------------------
# ablation


def ablation_agent(cfg: ExperimentConfig, name: str) -> AgentConfig:
    base = replace(cfg.agent, s_max=cfg.max_steps, epsilon=0.0)
    if name == "full" or name == "random_rl":
        return base
    if name == "no_vision":
        return replace(base, alpha=1.0, use_vision=False)
    if name == "no_rl":
        return replace(base, alpha=0.0)
    if name == "no_probe":
        return replace(base, investigate=False)
    raise ValueError(f"unknown ablation condition {name!r}")


def ablation_trial(cfg: ExperimentConfig, name: str, values: np.ndarray, seed: int, index: int) -> TrialResult:
    setup = cfg.task()
    streams = RngStreams(seed, _EVAL_STREAM, index)
    world = sample_initial_condition(
        streams.world, cfg.initial_error_range, setup.geometry, setup.start_height, seed=index
    )
    # a fresh uniformly random table per trial, drawn before any other policy randomness
    q = QTable.random(streams.policy) if name == "random_rl" else QTable(values)
    log = run_episode(world, q, ablation_agent(cfg, name), "eval", streams, setup)
    return TrialResult(index, log.outcome, log.n_steps, log)


def evaluate_condition(
    cfg: ExperimentConfig, name: str, qtable: QTable, seed: int
) -> Tuple[ResultRow, List[TrialResult]]:
    t0 = time.perf_counter()
    args = [(cfg, name, qtable.values, seed, i) for i in range(cfg.trials)]
    trials = _map_trials(ablation_trial, args, cfg.workers)
    return _summarise(name, "ablation", trials, time.perf_counter() - t0), trials


def run_ablation(
    cfg: ExperimentConfig, qtable: Optional[QTable] = None, seed: Optional[int] = None
) -> Tuple[ResultTable, Dict[str, List[TrialResult]]]:
    """Evaluate the full method and its four ablations on the same trials.

    Trains first when no table is given.
    """
    cfg = ablation_config(cfg)
    seed = cfg.seed if seed is None else seed
    if qtable is None:
        qtable = train_agent(cfg, seed).qtable
    table = ResultTable("ablation")
    logs: Dict[str, List[TrialResult]] = {}
    for name in ABLATIONS:
        row, trials = evaluate_condition(cfg, name, qtable, seed)
        table.rows.append(row)
        logs[name] = trials
    return table, logs


# ---------------------------------------------------------------------------
# baseline comparison


def _world_at(setup: TaskSetup, geometry, ee: Pose, seed: int) -> WorldState:
    return WorldState(geometry=geometry, ram_pose=ee, commanded_pose=ee, rng_seed=seed)


def sample_board_offset(rng: np.random.Generator, offset_range: Tuple[float, float]) -> Pose:
    lo, hi = offset_range
    r = rng.uniform(lo, hi)
    phi = rng.uniform(0.0, 2.0 * math.pi)
    return Pose.from_translation(r * math.cos(phi), r * math.sin(phi), 0.0)


class _Recorder:
    """Builds an EpisodeLog for scripted (non-learning) controllers."""

    def __init__(self, cfg: ExperimentConfig, streams: RngStreams):
        self.cfg = cfg
        self.streams = streams
        self.log = EpisodeLog()

    def record(self, world: WorldState, command: np.ndarray) -> None:
        w = estimate_external_wrench(world, self.streams.noise, self.cfg.compliance)
        s = encode_state(w, self.cfg.agent.force_threshold, self.cfg.agent.moment_threshold)
        step = len(self.log.steps) + 1
        self.log.steps.append(
            StepRecord(step, s.index, -1, np.zeros(6), np.zeros(6), command, w.as_vector(), 0.0, True, False)
        )


def _move(world: WorldState, target: Pose, cfg: ExperimentConfig) -> Tuple[WorldState, bool]:
    try:
        world, _ = step_quasi_static(world, target, cfg.compliance)
        return world, False
    except SafetyStop as stop:
        return stop.world, True


def _lowered(world: WorldState, dz: float) -> Pose:
    cmd = world.commanded_pose
    slot = world.geometry.slot_in_world()
    return Pose(cmd.t + slot.R @ np.array([0.0, 0.0, -dz]), cmd.q)


def straight_descent(world: WorldState, cfg: ExperimentConfig, streams: RngStreams) -> EpisodeLog:
    """Lower the set-point by a fixed amount each step until done."""
    rec = _Recorder(cfg, streams)
    goal = goal_pose(world.geometry)
    outcome = Outcome.ONGOING
    for _ in range(cfg.max_steps):
        world, stopped = _move(world, _lowered(world, cfg.descent_step), cfg)
        rec.record(world, np.array([0.0, 0.0, -cfg.descent_step, 0.0, 0.0, 0.0]))
        outcome = Outcome.FAILED if stopped else check_outcome(world, goal)
        if outcome != Outcome.ONGOING:
            break
    rec.log.outcome = outcome
    rec.log.final_world = world
    return rec.log


def _press(world: WorldState, force: float, cfg: ExperimentConfig, max_travel: float) -> Tuple[WorldState, bool]:
    """Descend in short increments until the reaction reaches ``force``."""
    increment = 0.0005
    travelled = 0.0
    while travelled < max_travel:
        world, stopped = _move(world, _lowered(world, increment), cfg)
        travelled += increment
        if stopped or -world.wrench.F[2] >= force:
            return world, stopped
    return world, False


def _lifted(world: WorldState, height_ref: Pose) -> Pose:
    """Current lateral set-point raised (or lowered) to the height of ``height_ref``."""
    up = world.geometry.slot_in_world().R[:, 2]
    cmd = world.commanded_pose
    return Pose(cmd.t + up * float((height_ref.t - cmd.t) @ up), height_ref.q)


def spiral_search(world: WorldState, cfg: ExperimentConfig, streams: RngStreams) -> EpisodeLog:
    """Lift, shift to the next spiral point about the start, press; repeat."""
    rec = _Recorder(cfg, streams)
    geo = world.geometry
    slot = geo.slot_in_world()
    goal = goal_pose(geo)
    center = world.commanded_pose
    max_travel = cfg.start_height + geo.depth + 0.002
    outcome = Outcome.ONGOING
    for k in range(cfg.max_steps):
        offset = spiral_search_policy(k, cfg.pitch, cfg.spiral_angular_step)
        above = Pose(center.t + slot.R @ np.array([offset[0], offset[1], 0.0]), center.q)
        world, stopped = _move(world, _lifted(world, center), cfg)
        if not stopped:
            world, stopped = _move(world, above, cfg)
        if not stopped:
            world, stopped = _press(world, cfg.spiral_press_force, cfg, max_travel)
        rec.record(world, np.array([offset[0], offset[1], 0.0, 0.0, 0.0, 0.0]))
        outcome = Outcome.FAILED if stopped else check_outcome(world, goal)
        if outcome != Outcome.ONGOING:
            break
    rec.log.outcome = outcome
    rec.log.final_world = world
    return rec.log


def comparison_trial(
    cfg: ExperimentConfig, name: str, moved: bool, values: np.ndarray, seed: int, index: int
) -> TrialResult:
    setup = cfg.task()
    streams = RngStreams(seed, _MOVED_STREAM if moved else _FIXED_STREAM, BASELINES.index(name), index)
    geometry = setup.geometry
    if moved:
        geometry = geometry.with_board_offset(sample_board_offset(streams.world, cfg.board_offset_range))
    nominal = setup.geometry.slot_in_world()
    if name in ("baseline1", "baseline2"):
        start = compose(nominal, setup.start_in_slot())
    else:
        # global image taken from the taught pose, which ignores any board motion
        global_world = _world_at(setup, geometry, compose(nominal, setup.global_in_slot()), index)
        start = rough_locate(global_world, setup, rng=streams.vision)
    world = _world_at(setup, geometry, start, index)
    t0 = time.perf_counter()
    if name in ("baseline1", "baseline3"):
        log = straight_descent(world, cfg, streams)
    elif name in ("baseline2", "baseline4"):
        log = spiral_search(world, cfg, streams)
    else:
        agent = replace(cfg.agent, s_max=cfg.max_steps, epsilon=0.0)
        log = run_episode(world, QTable(values), agent, "eval", streams, setup)
    log.wall_time = time.perf_counter() - t0
    return TrialResult(index, log.outcome, log.n_steps, log)


def run_comparison(
    cfg: ExperimentConfig,
    qtable: Optional[QTable] = None,
    seed: Optional[int] = None,
    names: Sequence[str] = BASELINES,
) -> Tuple[ResultTable, Dict[str, List[TrialResult]]]:
    """Baselines and the full method, on a fixed and on a moved board.

    Baselines that never look at the board get ``blind_trials`` trials on
    the moved board.
    """
    unknown = set(names) - set(BASELINES)
    if unknown:
        raise ValueError(f"unknown baselines: {sorted(unknown)}")
    cfg = comparison_config(cfg)
    seed = cfg.seed if seed is None else seed
    if qtable is None:
        qtable = train_agent(ablation_config(cfg), seed).qtable
    table = ResultTable("comparison")
    logs: Dict[str, List[TrialResult]] = {}
    for moved in (False, True):
        condition = "moved" if moved else "fixed"
        for name in names:
            n = cfg.trials
            if moved and name in ("baseline1", "baseline2"):
                n = min(cfg.blind_trials, cfg.trials)
            t0 = time.perf_counter()
            args = [(cfg, name, moved, qtable.values, seed, i) for i in range(n)]
            trials = _map_trials(comparison_trial, args, cfg.workers)
            table.rows.append(_summarise(name, condition, trials, time.perf_counter() - t0))
            logs[f"{name}/{condition}"] = trials
    return table, logs


def evaluate(
    cfg: ExperimentConfig, qtable: QTable, seed: Optional[int] = None, condition: str = "full"
) -> Tuple[ResultTable, List[TrialResult]]:
    """Single-condition evaluation under the ablation protocol."""
    seed = cfg.seed if seed is None else seed
    row, trials = evaluate_condition(cfg, condition, qtable, seed)
    return ResultTable("eval", [row]), trials
