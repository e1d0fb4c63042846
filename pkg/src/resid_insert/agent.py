"""Visual residual Q-learning with a belief-gated investigative press."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .contact import (
    ComplianceParams,
    Outcome,
    SafetyStop,
    SlotGeometry,
    Wrench,
    WorldState,
    apply_investigative_press,
    check_outcome,
    estimate_external_wrench,
    goal_pose,
    step_quasi_static,
)
from .rng import RngStreams
from .transforms import (
    Pose,
    PoseError,
    Twist,
    apply_increment,
    axis_angle_to_rotation,
    compose,
    inverse,
    quat_multiply,
)
from .vision import CameraModel, FeatureSet, VisionSensor, slot_features

N_AXES = 6
N_STATES = 3 ** N_AXES
N_ACTIONS = 6


class NoConvergence(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class AgentConfig:
    alpha: float = 0.5
    k_p: Tuple[float, ...] = (1.0, 1.0, 0.3, 0.0, 0.0, 0.0)
    lambda_scale: float = 0.002
    gamma: float = 0.1
    learning_rate: float = 0.1
    epsilon: float = 0.0
    epsilon_start: float = 0.3
    epsilon_end: float = 0.05
    force_threshold: float = 4.0
    moment_threshold: float = 0.4
    s_max: int = 50
    probe_force: float = 25.0
    investigate: bool = True
    use_vision: bool = True

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must be in [0, 1]")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("learning rate must be in (0, 1]")
        if self.force_threshold <= 0.0 or self.moment_threshold <= 0.0:
            raise ValueError("contact thresholds must be positive")
        if self.lambda_scale <= 0.0:
            raise ValueError("lambda_scale must be positive")
        if self.s_max < 1:
            raise ValueError("s_max must be >= 1")
        if len(self.k_p) != 6:
            raise ValueError("k_p needs six gains")


# ---------------------------------------------------------------------------
# fixed (vision) policy


def pbvs_velocity(s_v: PoseError, R_est: np.ndarray, lambda_gain: float) -> Twist:
    """Camera twist giving exponential, decoupled decay of the pose error."""
    return Twist(-lambda_gain * (np.asarray(R_est).T @ s_v.t_err), -lambda_gain * s_v.theta_u)


def fixed_policy(s_v: Sequence[float], k_p: Sequence[float]) -> np.ndarray:
    if isinstance(s_v, PoseError):
        s_v = s_v.as_vector()
    return -np.asarray(k_p, dtype=float) * np.asarray(s_v, dtype=float)


# ---------------------------------------------------------------------------
# discrete contact state


@dataclass(frozen=True)
class DiscreteState:
    code: Tuple[int, ...]

    @property
    def index(self) -> int:
        return state_index(self.code)

    @classmethod
    def from_index(cls, index: int) -> "DiscreteState":
        return cls(decode_index(index))

    @property
    def is_zero(self) -> bool:
        return not any(self.code)


def state_index(code: Sequence[int]) -> int:
    return sum((c + 1) * 3 ** i for i, c in enumerate(code))


def decode_index(index: int) -> Tuple[int, ...]:
    if not 0 <= index < N_STATES:
        raise ValueError(f"state index out of range: {index}")
    out = []
    for _ in range(N_AXES):
        index, r = divmod(index, 3)
        out.append(r - 1)
    return tuple(out)


def encode_state(w: Wrench, f_thresh: float, m_thresh: float) -> DiscreteState:
    if f_thresh <= 0.0 or m_thresh <= 0.0:
        raise ValueError("thresholds must be positive")
    code = []
    for value, th in zip(w.as_vector(), (f_thresh,) * 3 + (m_thresh,) * 3):
        code.append(0 if abs(value) <= th else (1 if value > 0 else -1))
    return DiscreteState(tuple(code))


def belief(state: DiscreteState, raw: Wrench, m_thresh: float) -> bool:
    """Whether the encoded contact state can be trusted without probing.

    Free space is unambiguous and so is any supra-threshold moment; a force
    contact whose moments are all below threshold is not.
    """
    if state.is_zero:
        return True
    return bool(np.any(np.abs(raw.M) > m_thresh))


# ---------------------------------------------------------------------------
# Q-table and learning rule


@dataclass(frozen=True)
class DiscreteAction:
    id: int

    @property
    def axis(self) -> int:
        return self.id // 2

    @property
    def direction(self) -> int:
        return 1 if self.id % 2 == 0 else -1

    @property
    def name(self) -> str:
        return ("+" if self.direction > 0 else "-") + "xyz"[self.axis]


ACTIONS = tuple(DiscreteAction(i) for i in range(N_ACTIONS))


class QTable:
    HEADER = f"qtable v1 states={N_STATES} actions={N_ACTIONS}"

    def __init__(self, values: Optional[np.ndarray] = None, visit_counts: Optional[np.ndarray] = None):
        self.values = np.zeros((N_STATES, N_ACTIONS)) if values is None else np.array(values, dtype=float)
        self.visit_counts = (
            np.zeros((N_STATES, N_ACTIONS), dtype=np.int64)
            if visit_counts is None
            else np.array(visit_counts, dtype=np.int64)
        )
        if self.values.shape != (N_STATES, N_ACTIONS):
            raise ValueError(f"Q-table must be {N_STATES}x{N_ACTIONS}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("Q-table entries must be finite")

    @classmethod
    def random(cls, rng: np.random.Generator, low: float = -1.0, high: float = 1.0) -> "QTable":
        return cls(rng.uniform(low, high, size=(N_STATES, N_ACTIONS)))

    def copy(self) -> "QTable":
        return QTable(self.values.copy(), self.visit_counts.copy())

    def to_text(self) -> str:
        lines = [self.HEADER]
        for i, row in enumerate(self.values):
            lines.append(",".join([str(i)] + [repr(float(v)) for v in row]))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "QTable":
        lines = [l for l in text.splitlines() if l.strip()]
        if not lines or lines[0].strip() != cls.HEADER:
            raise ValueError(f"bad Q-table header, expected {cls.HEADER!r}")
        rows = lines[1:]
        if len(rows) != N_STATES:
            raise ValueError(f"expected {N_STATES} rows, found {len(rows)}")
        values = np.zeros((N_STATES, N_ACTIONS))
        seen = set()
        for line in rows:
            parts = line.split(",")
            if len(parts) != N_ACTIONS + 1:
                raise ValueError(f"expected {N_ACTIONS + 1} fields: {line!r}")
            idx = int(parts[0])
            if not 0 <= idx < N_STATES or idx in seen:
                raise ValueError(f"bad or duplicate state index {idx}")
            seen.add(idx)
            values[idx] = [float(v) for v in parts[1:]]
        return cls(values)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_text())

    @classmethod
    def load(cls, path) -> "QTable":
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read())


def select_action(q: QTable, s: DiscreteState, epsilon: float, rng: np.random.Generator) -> DiscreteAction:
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must be in [0, 1]")
    if epsilon > 0.0 and rng.random() < epsilon:
        return ACTIONS[int(rng.integers(N_ACTIONS))]
    return ACTIONS[int(np.argmax(q.values[s.index]))]  # argmax returns the lowest id on ties


def q_update(
    q: QTable, s: int, a: int, r: float, s_next: int, done: bool, lr: float, gamma: float
) -> None:
    bootstrap = 0.0 if done else gamma * float(q.values[s_next].max())
    q.values[s, a] += lr * (r + bootstrap - q.values[s, a])
    q.visit_counts[s, a] += 1


def combine_residual(u_H: Sequence[float], u_RL: Sequence[float], alpha: float) -> np.ndarray:
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must be in [0, 1]")
    u_H = np.asarray(u_H, dtype=float)
    u_RL = np.asarray(u_RL, dtype=float)
    if alpha == 0.0:
        return u_H.copy()
    if alpha == 1.0:
        return u_RL.copy()
    return (1.0 - alpha) * u_H + alpha * u_RL


def rl_action_vector(a: DiscreteAction, lambda_scale: float) -> np.ndarray:
    if lambda_scale <= 0.0:
        raise ValueError("lambda_scale must be positive")
    u = np.zeros(6)
    u[a.axis] = a.direction * lambda_scale
    return u


def compute_reward(s_xy: float, step: int, s_max: int, outcome: Outcome) -> float:
    if outcome == Outcome.SUCCESS:
        return 1.0
    if outcome == Outcome.FAILED:
        return -2.0
    r = 1.0 - 150.0 * s_xy - step / s_max
    # the unclipped form can drop below the failure penalty for gross errors
    return max(r, -2.0)


# ---------------------------------------------------------------------------
# task and episode


@dataclass(frozen=True)
class TaskSetup:
    """Everything about the physical task an episode needs besides the agent."""

    geometry: SlotGeometry = field(default_factory=SlotGeometry)
    compliance: ComplianceParams = field(default_factory=ComplianceParams)
    accurate_camera: CameraModel = field(default_factory=lambda: CameraModel(pixel_noise_sigma=0.3, depth_noise_sigma=0.0005))
    rough_camera: CameraModel = field(default_factory=lambda: CameraModel(pixel_noise_sigma=1.0, depth_noise_sigma=0.0005))
    start_height: float = 0.0005
    global_height: float = 0.08

    def landmarks(self) -> FeatureSet:
        return slot_features(self.geometry.length, self.geometry.width)

    def goal_in_slot(self) -> Pose:
        return Pose(np.array([0.0, 0.0, self.geometry.grip_height - self.geometry.depth]), np.array([1.0, 0.0, 0.0, 0.0]))

    def start_in_slot(self) -> Pose:
        """Taught contact-phase start: RAM centred just above the opening."""
        return Pose(np.array([0.0, 0.0, self.geometry.grip_height + self.start_height]), np.array([1.0, 0.0, 0.0, 0.0]))

    def global_in_slot(self) -> Pose:
        """Taught pose from which the global image was taken."""
        return Pose(np.array([0.0, 0.0, self.geometry.grip_height + self.global_height]), np.array([1.0, 0.0, 0.0, 0.0]))

    def accurate_sensor(self) -> VisionSensor:
        return VisionSensor.taught(self.accurate_camera, self.landmarks(), self.goal_in_slot())

    def rough_sensor(self) -> VisionSensor:
        return VisionSensor.taught(self.rough_camera, self.landmarks(), self.global_in_slot())

    def without_noise(self) -> "TaskSetup":
        return replace(
            self,
            compliance=replace(self.compliance, noise_enabled=False),
            accurate_camera=self.accurate_camera.noiseless(),
            rough_camera=self.rough_camera.noiseless(),
        )


@dataclass
class StepRecord:
    step: int
    state_index: int
    action_id: int
    u_H: np.ndarray
    u_RL: np.ndarray
    command: np.ndarray
    wrench: np.ndarray
    reward: float
    belief: bool
    probed: bool


@dataclass
class EpisodeLog:
    steps: List[StepRecord] = field(default_factory=list)
    outcome: Outcome = Outcome.ONGOING
    wall_time: float = 0.0
    final_world: Optional[WorldState] = None

    @property
    def total_reward(self) -> float:
        return float(sum(r.reward for r in self.steps))

    @property
    def n_steps(self) -> int:
        return len(self.steps)


def ee_in_slot(world: WorldState) -> Pose:
    return compose(inverse(world.geometry.slot_in_world()), Pose(world.ram_pose.t, world.commanded_pose.q))


def vision_error(sensor: VisionSensor, world: WorldState, rng: Optional[np.random.Generator]) -> PoseError:
    """``s_v`` re-expressed along the EE axes."""
    return sensor.to_ee(sensor.state(ee_in_slot(world), rng))


def _execute(world: WorldState, u: np.ndarray, params: ComplianceParams) -> Tuple[WorldState, bool]:
    x_t = Pose(world.ram_pose.t, world.commanded_pose.q)
    x_des = apply_increment(x_t, u)
    try:
        world, _ = step_quasi_static(world, x_des, params)
        return world, False
    except SafetyStop as stop:
        return stop.world, True


def run_episode(
    world: WorldState,
    qtable: QTable,
    config: AgentConfig,
    mode: str,
    rng: RngStreams,
    setup: TaskSetup,
    epsilon: Optional[float] = None,
    sensor: Optional[VisionSensor] = None,
) -> EpisodeLog:
    """One insertion attempt from ``world`` under the residual policy.

    ``mode`` is ``"train"`` (epsilon-greedy, Q updated in place) or
    ``"eval"`` (greedy, table untouched). With ``config.investigate`` off,
    an unclear contact state makes the next action uniformly random
    instead of triggering a press.
    """
    if mode not in ("train", "eval"):
        raise ValueError("mode must be 'train' or 'eval'")
    t0 = time.perf_counter()
    eps = (config.epsilon if epsilon is None else epsilon) if mode == "train" else 0.0
    params = setup.compliance
    sensor = sensor or setup.accurate_sensor()
    goal = goal_pose(world.geometry)
    log = EpisodeLog()

    w_obs = estimate_external_wrench(world, rng.noise, params)
    s = encode_state(w_obs, config.force_threshold, config.moment_threshold)
    unclear = False
    s_v = vision_error(sensor, world, rng.vision)

    for step in range(1, config.s_max + 1):
        if unclear:
            action = ACTIONS[int(rng.policy.integers(N_ACTIONS))]
        else:
            action = select_action(qtable, s, eps, rng.policy)
        u_RL = rl_action_vector(action, config.lambda_scale)
        u_H = fixed_policy(s_v, config.k_p) if config.use_vision else np.zeros(6)
        u = combine_residual(u_H, u_RL, config.alpha)
        world, stopped = _execute(world, u, params)

        w_obs = estimate_external_wrench(world, rng.noise, params)
        s_next = encode_state(w_obs, config.force_threshold, config.moment_threshold)
        trusted = belief(s_next, w_obs, config.moment_threshold)
        probed = False
        unclear = False
        if not trusted and not stopped:
            if config.investigate:
                try:
                    world, peak = apply_investigative_press(world, config.probe_force, params)
                except SafetyStop as stop:
                    world, peak, stopped = stop.world, stop.wrench, True
                w_obs = estimate_external_wrench(world, rng.noise, params, wrench=peak)
                s_next = encode_state(w_obs, config.force_threshold, config.moment_threshold)
                probed = True
            else:
                unclear = True

        outcome = check_outcome(world, goal)
        if stopped:
            outcome = Outcome.FAILED
        s_v = vision_error(sensor, world, rng.vision)
        reward = compute_reward(float(np.linalg.norm(s_v.t_err[:2])), step, config.s_max, outcome)
        done = outcome != Outcome.ONGOING
        if mode == "train":
            q_update(qtable, s.index, action.id, reward, s_next.index, done, config.learning_rate, config.gamma)
        log.steps.append(
            StepRecord(step, s.index, action.id, u_H, u_RL, u, w_obs.as_vector(), reward, trusted, probed)
        )
        s = s_next
        if done:
            log.outcome = outcome
            break

    log.final_world = world
    log.wall_time = time.perf_counter() - t0
    return log


@dataclass
class TrainingResult:
    qtable: QTable
    episode_rewards: List[float]
    successes: List[bool]
    # per-step average; totals shrink as episodes get shorter
    mean_step_rewards: List[float] = field(default_factory=list)


def epsilon_schedule(config: AgentConfig, episode: int, episodes: int) -> float:
    if episodes <= 1:
        return config.epsilon_start
    frac = episode / (episodes - 1)
    return config.epsilon_start + frac * (config.epsilon_end - config.epsilon_start)


def train(
    env_factory: Callable[[int, RngStreams], WorldState],
    config: AgentConfig,
    episodes: int,
    seed: int,
    setup: TaskSetup,
    qtable: Optional[QTable] = None,
) -> TrainingResult:
    """Epsilon-greedy Q-learning over ``episodes`` episodes.

    ``env_factory(i, streams)`` builds the start world for episode ``i``.
    Every episode draws its own named substreams from ``seed``.
    """
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    q = qtable or QTable()
    sensor = setup.accurate_sensor()
    rewards, successes, means = [], [], []
    for i in range(episodes):
        streams = RngStreams(seed, 0, i)
        world = env_factory(i, streams)
        log = run_episode(world, q, config, "train", streams, setup,
                          epsilon=epsilon_schedule(config, i, episodes), sensor=sensor)
        rewards.append(log.total_reward)
        successes.append(log.outcome == Outcome.SUCCESS)
        means.append(log.total_reward / max(1, log.n_steps))
    return TrainingResult(q, rewards, successes, means)


# ---------------------------------------------------------------------------
# rough location phase


@dataclass
class ServoTrace:
    pose: Pose
    errors: List[float]
    angle_errors: List[float]
    ticks: int


def pbvs_servo(
    sensor: VisionSensor,
    ee_start: Pose,
    lambda_gain: float,
    dt: float = 0.01,
    tol: float = 0.001,
    max_ticks: int = 2000,
    rng: Optional[np.random.Generator] = None,
    run_all: bool = False,
) -> ServoTrace:
    """Free-space PBVS loop: integrate the camera twist with explicit Euler.

    Stops once the estimated translation error is below ``tol`` (unless
    ``run_all``). Poses are in the slot frame.
    """
    ext = sensor.camera.extrinsic
    cam = ee_start @ ext
    errors, angles = [], []
    for tick in range(max_ticks + 1):
        ee = cam @ inverse(ext)
        s_v = sensor.state(ee, rng)
        errors.append(float(np.linalg.norm(s_v.t_err)))
        angles.append(float(np.linalg.norm(s_v.theta_u)))
        if not run_all and errors[-1] < tol:
            return ServoTrace(ee, errors, angles, tick)
        if tick == max_ticks:
            break
        tw = pbvs_velocity(s_v, _rotation_of(s_v), lambda_gain)
        # twist is in the current camera frame
        cam = Pose(cam.t + cam.R @ tw.v * dt, quat_multiply(cam.q, axis_angle_to_rotation(tw.w * dt)))
    ee = cam @ inverse(ext)
    if run_all:
        return ServoTrace(ee, errors, angles, max_ticks)
    raise NoConvergence(f"PBVS did not converge within {max_ticks} ticks")


def _rotation_of(s_v: PoseError) -> np.ndarray:
    return Pose(np.zeros(3), axis_angle_to_rotation(s_v.theta_u)).R


def rough_locate(
    world: WorldState,
    setup: TaskSetup,
    lambda_gain: float = 5.0,
    rng: Optional[np.random.Generator] = None,
    dt: float = 0.01,
    max_ticks: int = 2000,
) -> Pose:
    """Servo on the global image, then apply the taught global-to-detail offset.

    ``world.ram_pose`` is where the robot took the global image (the taught
    global pose in world coordinates). Returns the EE world pose at which
    the contact phase begins.
    """
    slot = world.geometry.slot_in_world()
    sensor = setup.rough_sensor()
    # the servo runs in the true slot frame; the estimate only sees features
    start = compose(inverse(slot), world.ram_pose)
    trace = pbvs_servo(sensor, start, lambda_gain, dt=dt, max_ticks=max_ticks, rng=rng)
    g_x_d = compose(inverse(setup.global_in_slot()), setup.start_in_slot())
    return compose(slot, compose(trace.pose, g_x_d))
