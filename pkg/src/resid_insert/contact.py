"""Quasi-static compliant contact between a held RAM module and its slot.

The robot is an ideal Cartesian spring: the force it exerts through the EE
is ``K_trans * (commanded - actual)``. The slot is rigid. Each call to
:func:`step_quasi_static` sweeps the RAM from its previous equilibrium to
the new one in short increments, projecting onto the free space after
every increment and clamping the tangential load to the Coulomb cone, so
stick/slip history (and therefore jamming) is path dependent.

Geometry is expressed in the slot frame: origin at the centre of the slot
opening, x along the long side, z up, slot bottom at ``z = -depth``. The
point being constrained is the centre of the RAM's bottom edge. The long
lips carry a 45 degree lead-in of width ``chamfer`` and the slot ends one
of width ``end_chamfer``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import lru_cache
from itertools import combinations
from typing import Optional, Tuple

import numpy as np

from .transforms import Pose, axis_angle_to_rotation, quat_multiply

PENETRATION_TOL = 1e-6
EQUILIBRIUM_TOL = 1e-8
MAX_SOLVER_ITERS = 200

_FEAS_TOL = 1e-12
_PROBE_EPS = 1e-7


class ContactError(RuntimeError):
    pass


class NonConvergence(ContactError):
    pass


class SafetyStop(ContactError):
    """Raised when the spring load would exceed the force cap.

    Motion halts at the last admissible equilibrium; ``world`` and
    ``wrench`` carry that halted state with the safety latch set.
    """

    def __init__(self, message: str, world: "WorldState", wrench: "Wrench"):
        super().__init__(message)
        self.world = world
        self.wrench = wrench


class Outcome(str, Enum):
    SUCCESS = "success"
    FAILED = "failed"
    ONGOING = "ongoing"


@dataclass(frozen=True)
class SlotGeometry:
    length: float = 0.120
    width: float = 0.0052
    depth: float = 0.005
    ram_length: float = 0.1198
    ram_width: float = 0.0050
    chamfer: float = 0.003
    end_chamfer: float = 0.0005
    grip_height: float = 0.030
    slot_pose: Pose = field(default_factory=Pose.identity)
    board_offset: Pose = field(default_factory=Pose.identity)

    def __post_init__(self) -> None:
        if self.clearance <= 0.0:
            raise ValueError("clearance must be positive (slot wider than RAM)")
        if self.ram_length >= self.length:
            raise ValueError("RAM must be shorter than the slot")
        if self.depth <= 0.0:
            raise ValueError("depth must be positive")
        if self.length <= self.width:
            raise ValueError("slot length must exceed its width")
        if not (0.0 <= self.chamfer < self.depth and 0.0 <= self.end_chamfer < self.depth):
            raise ValueError("chamfers must be in [0, depth)")

    @property
    def clearance(self) -> float:
        return self.width - self.ram_width

    @property
    def half_clearance_x(self) -> float:
        return 0.5 * (self.length - self.ram_length)

    @property
    def half_clearance_y(self) -> float:
        return 0.5 * (self.width - self.ram_width)

    def slot_in_world(self) -> Pose:
        return self.board_offset @ self.slot_pose

    def key(self) -> Tuple[float, ...]:
        return (
            self.half_clearance_x,
            self.half_clearance_y,
            self.end_chamfer,
            self.chamfer,
            self.depth,
        )

    def with_board_offset(self, offset: Pose) -> "SlotGeometry":
        return replace(self, board_offset=offset)


@dataclass(frozen=True)
class ComplianceParams:
    K_trans: float = 3000.0
    K_rot: float = 300.0
    mu: float = 0.3
    wrench_noise_sigma: Tuple[float, float] = (0.5, 0.05)
    noise_enabled: bool = True
    force_cap: float = 30.0
    substep: float = 0.0001
    sweep_increment: float = 0.0001

    def __post_init__(self) -> None:
        if self.K_trans <= 0.0 or self.K_rot <= 0.0:
            raise ValueError("stiffness must be positive")
        if self.mu < 0.0:
            raise ValueError("friction coefficient must be non-negative")


@dataclass(frozen=True)
class Wrench:
    F: np.ndarray
    M: np.ndarray

    @classmethod
    def zero(cls) -> "Wrench":
        return cls(np.zeros(3), np.zeros(3))

    def as_vector(self) -> np.ndarray:
        return np.concatenate((self.F, self.M))

    @property
    def force_norm(self) -> float:
        return float(np.linalg.norm(self.F))


@dataclass(frozen=True)
class WorldState:
    """Complete simulator configuration for one episode.

    ``ram_pose`` and ``commanded_pose`` are EE poses in the world frame; the
    RAM's bottom edge centre sits ``grip_height`` below the EE origin.
    """

    geometry: SlotGeometry
    ram_pose: Pose
    commanded_pose: Pose
    contact_flags: Tuple[str, ...] = ()
    wrench: Wrench = field(default_factory=Wrench.zero)
    rng_seed: int = 0
    step_count: int = 0
    safety_latched: bool = False


# ---------------------------------------------------------------------------
# free-space projection


def _pieces(clx: float, cly: float, chx: float, chy: float, depth: float):
    """Convex polyhedra whose union is the free space of the bottom point."""
    ax = clx + chx
    ay = cly + chy
    top = ([(0, 0, -1)], [0.0], ["top"])
    vx = ([(1, 0, -1), (-1, 0, -1)], [ax, ax], ["chamfer+x", "chamfer-x"])
    vy = ([(0, 1, -1), (0, -1, -1)], [ay, ay], ["chamfer+y", "chamfer-y"])
    def funnel(ch: float):
        return ([(0, 0, -1)], [ch], ["funnel"])

    cx = ([(1, 0, 0), (-1, 0, 0)], [clx, clx], ["wall+x", "wall-x"])
    cy = ([(0, 1, 0), (0, -1, 0)], [cly, cly], ["wall+y", "wall-y"])
    bottom = ([(0, 0, -1)], [depth], ["bottom"])

    def join(*parts):
        rows, rhs, names = [], [], []
        for r, b, n in parts:
            rows += r
            rhs += b
            names += n
        return np.array(rows, dtype=float), np.array(rhs), names

    return [
        join(top),
        join(vx, vy, funnel(min(chx, chy))),
        join(vx, cy, funnel(chx)),
        join(cx, vy, funnel(chy)),
        join(cx, cy, bottom),
    ]


class FreeSpace:
    """Exact Euclidean projection onto the slot's free space.

    The free space is a union of five convex polyhedra. For each one every
    active set of up to three constraints has a precomputed affine
    projector; the projection is the nearest candidate that is feasible for
    its own polyhedron.
    """

    def __init__(self, clx: float, cly: float, chx: float, chy: float, depth: float):
        pieces = _pieces(clx, cly, chx, chy, depth)
        width = max(len(b) for _, b, _ in pieces)
        mats, offs, a_pad, b_pad, owners, names = [], [], [], [], [], []
        for pid, (A, b, nm) in enumerate(pieces):
            Ap = np.zeros((width, 3))
            bp = np.ones(width)
            Ap[: len(b)] = A
            bp[: len(b)] = b
            for r in range(0, 4):
                for S in combinations(range(len(b)), r):
                    if r == 0:
                        M, v = np.eye(3), np.zeros(3)
                    else:
                        As = A[list(S)]
                        G = As @ As.T
                        if abs(np.linalg.det(G)) < 1e-9:
                            continue
                        Gi = np.linalg.inv(G)
                        M = np.eye(3) - As.T @ Gi @ As
                        v = As.T @ Gi @ b[list(S)]
                    mats.append(M)
                    offs.append(v)
                    a_pad.append(Ap)
                    b_pad.append(bp)
                    owners.append(pid)
                    names.append(tuple(nm[i] for i in S))
        self._M = np.array(mats)
        self._v = np.array(offs)
        self._A = np.array(a_pad)
        self._b = np.array(b_pad)
        self._active = names
        self.pieces = pieces

    def project(self, c: np.ndarray) -> Tuple[np.ndarray, int]:
        G = self._M @ c + self._v
        viol = np.einsum("kij,kj->ki", self._A, G) - self._b
        ok = viol.max(axis=1) <= _FEAS_TOL
        d2 = np.where(ok, ((G - c) ** 2).sum(axis=1), np.inf)
        k = int(np.argmin(d2))
        return G[k], k

    def ray_limit(self, p: np.ndarray, d: np.ndarray, tol: float = 1e-12) -> float:
        """Longest step ``t`` along unit ``d`` keeping ``p + t d`` in a piece containing ``p``.

        Faces already touching ``p`` are ignored so sliding along them is not
        cut short. Returns ``inf`` when nothing blocks.
        """
        best = 0.0
        for A, b, _ in self.pieces:
            slack = b - A @ p
            if slack.min() < -tol:
                continue
            rate = A @ d
            hit = (rate > 1e-15) & (slack > tol)
            t = float((slack[hit] / rate[hit]).min()) if hit.any() else math.inf
            best = max(best, t)
        return best

    def active_names(self, k: int) -> Tuple[str, ...]:
        return self._active[k]

    def contains(self, p: np.ndarray, tol: float = _FEAS_TOL) -> bool:
        for A, b, _ in self.pieces:
            if float((A @ p - b).max()) <= tol:
                return True
        return False

    def penetration(self, p: np.ndarray) -> float:
        """Distance from ``p`` to free space (0 when ``p`` is admissible)."""
        q, _ = self.project(p)
        return float(np.linalg.norm(p - q))

    def tight_constraints(self, p: np.ndarray, tol: float = 1e-10) -> Tuple[str, ...]:
        names = set()
        for A, b, nm in self.pieces:
            r = A @ p - b
            if r.max() <= tol:
                names.update(n for n, ri in zip(nm, r) if ri > -tol)
        return tuple(sorted(names))


@lru_cache(maxsize=32)
def _free_space(key: Tuple[float, ...]) -> FreeSpace:
    return FreeSpace(*key)


def free_space(geometry: SlotGeometry) -> FreeSpace:
    return _free_space(geometry.key())


# ---------------------------------------------------------------------------
# quasi-static solve


def split_load(fs: FreeSpace, p: np.ndarray, f: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Split load ``f`` at ``p`` into a sliding part and a reaction part.

    The sliding part is ``f`` projected onto the tangent cone of the free
    space at ``p`` (found by projecting a tiny probe step); the remainder
    lies in the normal cone and is what the surfaces push back with. Edges
    and corners with several active faces are handled the same way.
    """
    fn_ = math.sqrt(float(f @ f))
    if fn_ == 0.0:
        return np.zeros(3), np.zeros(3)
    probe = p + (_PROBE_EPS / fn_) * f
    q, _ = fs.project(probe)
    tangent = (q - p) * (fn_ / _PROBE_EPS)
    normal = f - tangent
    if math.sqrt(float(normal @ normal)) <= 1e-3 * fn_:
        return f.copy(), np.zeros(3)
    return tangent, normal


def local_contact(fs: FreeSpace, p: np.ndarray, c: np.ndarray) -> Optional[np.ndarray]:
    """Unit direction of the surface reaction against motion from p toward c.

    Points into the obstacle. None when the first bit of motion toward ``c``
    is unobstructed.
    """
    _, normal = split_load(fs, p, c - p)
    nn = math.sqrt(float(normal @ normal))
    if nn == 0.0:
        return None
    return normal / nn


def friction_cone_violation(
    fs: FreeSpace, p: np.ndarray, c: np.ndarray, K: float, mu: float
) -> float:
    """How far the spring load at ``p`` lies outside the friction cone (N).

    Zero for a valid quasi-static equilibrium: either the spring is relaxed
    (``p == c``) or its sliding part is at most ``mu`` times the part the
    surfaces react.
    """
    f = K * (c - p)
    ft, fn = split_load(fs, p, f)
    return max(0.0, float(np.linalg.norm(ft)) - mu * float(np.linalg.norm(fn)))


def _sweep(
    fs: FreeSpace, p: np.ndarray, c: np.ndarray, K: float, mu: float, inc: float
) -> Tuple[np.ndarray, int]:
    """Relax ``p`` toward the quasi-static equilibrium under command ``c``."""
    for it in range(MAX_SOLVER_ITERS):
        d = c - p
        dn = math.sqrt(float(d @ d))
        if dn <= 1e-15:
            return c.copy(), it
        ft, fn = split_load(fs, p, K * d)
        fnn = math.sqrt(float(fn @ fn))
        if fnn == 0.0:
            step = p + d * min(1.0, inc / dn)
        else:
            ftn = math.sqrt(float(ft @ ft))
            excess = ftn - mu * fnn
            if excess <= 1e-12:
                return p, it
            length = min(excess / K, inc)
            limit = fs.ray_limit(p, ft / ftn)
            # stop on the first new face so edges are followed, not zig-zagged across
            if limit > 1e-12:
                length = min(length, limit)
            step = p + (ft / ftn) * length
        q, _ = fs.project(step)
        moved = q - p
        if float(moved @ moved) < 1e-28:
            return q, it
        p = q
    raise NonConvergence(f"quasi-static sweep exceeded {MAX_SOLVER_ITERS} iterations")


def _contact_point(p: np.ndarray, geo: SlotGeometry, flags: Tuple[str, ...]) -> np.ndarray:
    """Load application point relative to the RAM bottom centre (slot frame)."""
    if not flags or "bottom" in flags or any(f.startswith("wall") for f in flags):
        return np.zeros(3)
    out_x = abs(p[0]) > geo.half_clearance_x + 1e-9
    out_y = abs(p[1]) > geo.half_clearance_y + 1e-9
    if out_x and not out_y:
        # supported only on the slot end: the RAM pivots on that edge
        return np.array([math.copysign(0.5 * geo.length, p[0]) - p[0], 0.0, 0.0])
    if out_y:
        return np.array([0.0, math.copysign(0.5 * geo.width, p[1]) - p[1], 0.0])
    return np.zeros(3)


def _bottom_point(ee: Pose, geo: SlotGeometry) -> np.ndarray:
    return ee.apply(np.array([0.0, 0.0, -geo.grip_height]))


def _to_slot(slot: Pose, x: np.ndarray) -> np.ndarray:
    return slot.R.T @ (x - slot.t)


def _wrench_at(
    p: np.ndarray,
    c: np.ndarray,
    geo: SlotGeometry,
    params: ComplianceParams,
    flags: Tuple[str, ...],
    slot: Pose,
    ee_rot: np.ndarray,
) -> Wrench:
    F_slot = params.K_trans * (c - p)
    r = _contact_point(p, geo, flags) - np.array([0.0, 0.0, geo.grip_height])
    M_slot = np.cross(r, F_slot)
    to_ee = ee_rot.T @ slot.R
    return Wrench(to_ee @ F_slot, to_ee @ M_slot)


def _tilted(q: np.ndarray, M: np.ndarray, K_rot: float) -> np.ndarray:
    # compliance tilt about x and y only; yaw is held by the controller
    tilt = np.array([-M[0], -M[1], 0.0]) / K_rot
    return quat_multiply(q, axis_angle_to_rotation(tilt))


def solve_equilibrium(
    geo: SlotGeometry,
    p_prev: np.ndarray,
    c: np.ndarray,
    params: ComplianceParams,
) -> Tuple[np.ndarray, Tuple[str, ...]]:
    """Equilibrium bottom point (slot frame) reached from ``p_prev`` under ``c``."""
    fs = free_space(geo)
    p, _ = _sweep(fs, np.asarray(p_prev, float), np.asarray(c, float), params.K_trans, params.mu,
                  params.sweep_increment)
    flags = fs.tight_constraints(p) if not np.array_equal(p, c) else ()
    return p, flags


def step_quasi_static(
    world: WorldState, commanded: Pose, params: ComplianceParams
) -> Tuple[WorldState, Wrench]:
    """Move the impedance set-point to ``commanded`` and settle.

    The set-point travels in straight increments of at most
    ``params.substep``; the RAM is re-equilibrated after each. Returns the
    settled world and the true (noise-free) EE wrench.
    """
    geo = world.geometry
    slot = geo.slot_in_world()
    c_start = _to_slot(slot, _bottom_point(world.commanded_pose, geo))
    c_end = _to_slot(slot, _bottom_point(commanded, geo))
    p = _to_slot(slot, _bottom_point(world.ram_pose, geo))
    n_sub = max(1, int(math.ceil(float(np.linalg.norm(c_end - c_start)) / params.substep)))
    flags: Tuple[str, ...] = ()
    for k in range(1, n_sub + 1):
        c = c_start + (c_end - c_start) * (k / n_sub)
        p_new, flags_new = solve_equilibrium(geo, p, c, params)
        if params.K_trans * float(np.linalg.norm(c - p_new)) > params.force_cap:
            # halt at the last admissible equilibrium with the set-point parked on it
            c_halt = c_start + (c_end - c_start) * ((k - 1) / n_sub)
            halted = _settled_world(world, geo, slot, p, c_halt, commanded, flags, params, latched=True)
            raise SafetyStop(
                f"contact force would exceed {params.force_cap} N", halted, halted.wrench
            )
        p, flags = p_new, flags_new
    new_world = _settled_world(world, geo, slot, p, c_end, commanded, flags, params)
    return new_world, new_world.wrench


def _settled_world(
    world: WorldState,
    geo: SlotGeometry,
    slot: Pose,
    p: np.ndarray,
    c: np.ndarray,
    commanded: Pose,
    flags: Tuple[str, ...],
    params: ComplianceParams,
    latched: bool = False,
) -> WorldState:
    wrench = _wrench_at(p, c, geo, params, flags, slot, commanded.R)
    offset = commanded.t - _bottom_point(commanded, geo)
    ram = Pose(slot.apply(p) + offset, _tilted(commanded.q, wrench.M, params.K_rot))
    cmd = Pose(slot.apply(c) + offset, commanded.q)
    return replace(
        world,
        ram_pose=ram,
        commanded_pose=cmd,
        contact_flags=flags,
        wrench=wrench,
        step_count=world.step_count + 1,
        safety_latched=world.safety_latched or latched,
    )


def ram_bottom_in_slot(world: WorldState) -> np.ndarray:
    geo = world.geometry
    return _to_slot(geo.slot_in_world(), _bottom_point(world.ram_pose, geo))


def commanded_bottom_in_slot(world: WorldState) -> np.ndarray:
    geo = world.geometry
    return _to_slot(geo.slot_in_world(), _bottom_point(world.commanded_pose, geo))


PROBE_MIN_FORCE = 10.0
PROBE_MAX_FORCE = 25.0
PROBE_MAX_TRAVEL = 0.003


def apply_investigative_press(
    world: WorldState,
    f_z: float,
    params: ComplianceParams,
    enforce_range: bool = True,
) -> Tuple[WorldState, Wrench]:
    """Press along -z until the reaction reaches ``|f_z|`` or the RAM has moved 3 mm.

    Returns the world restored to its pre-press state together with the
    peak wrench seen during the press. ``enforce_range=False`` allows
    sub-range presses for characterising the probe response.
    """
    target = abs(f_z)
    if enforce_range and not PROBE_MIN_FORCE <= target <= PROBE_MAX_FORCE:
        raise ValueError(f"probe force must be within [{PROBE_MIN_FORCE}, {PROBE_MAX_FORCE}] N")
    if target > params.force_cap:
        raise SafetyStop("probe force exceeds the safety cap", world, world.wrench)
    geo = world.geometry
    slot = geo.slot_in_world()
    p0 = ram_bottom_in_slot(world)
    start_cmd = world.commanded_pose
    c0 = _to_slot(slot, _bottom_point(start_cmd, geo))
    down = _to_slot(slot, slot.t + np.array([0.0, 0.0, -1.0])) - _to_slot(slot, slot.t)
    inc = params.substep
    max_travel = PROBE_MAX_TRAVEL + target / params.K_trans + inc
    p, s = p0.copy(), 0.0
    peak = Wrench.zero()
    peak_fz = -1.0

    def fz_of(pp, cc, fl):
        return _wrench_at(pp, cc, geo, params, fl, slot, start_cmd.R)

    while s < max_travel:
        s_next = s + inc
        c = c0 + down * s_next
        p_next, fl = solve_equilibrium(geo, p, c, params)
        w = fz_of(p_next, c, fl)
        fz = abs(float(w.F[2]))
        moved = float(np.linalg.norm(p_next - p0))
        if fz >= target or moved >= PROBE_MAX_TRAVEL:
            # bisect the last increment so the press stops right at the limit
            lo, hi = s, s_next
            best = (p_next, fl, w)
            for _ in range(30):
                mid = 0.5 * (lo + hi)
                cm = c0 + down * mid
                pm, flm = solve_equilibrium(geo, p, cm, params)
                wm = fz_of(pm, cm, flm)
                if abs(float(wm.F[2])) >= target or float(np.linalg.norm(pm - p0)) >= PROBE_MAX_TRAVEL:
                    hi = mid
                    best = (pm, flm, wm)
                else:
                    lo = mid
            w = best[2]
            if abs(float(w.F[2])) > peak_fz:
                peak, peak_fz = w, abs(float(w.F[2]))
            break
        if fz > peak_fz:
            peak, peak_fz = w, fz
        p, s = p_next, s_next
    return world, peak


def estimate_external_wrench(
    world: WorldState,
    rng: np.random.Generator,
    params: ComplianceParams = ComplianceParams(),
    wrench: Optional[Wrench] = None,
) -> Wrench:
    """Observed wrench: the true EE wrench plus Gaussian sensor noise."""
    true = world.wrench if wrench is None else wrench
    if not params.noise_enabled:
        return true
    sf, sm = params.wrench_noise_sigma
    noise = rng.standard_normal(6)
    return Wrench(true.F + sf * noise[:3], true.M + sm * noise[3:])


CAPTURE_RADIUS = 0.005
DEPTH_TOLERANCE = 0.0005


def goal_pose(geometry: SlotGeometry) -> Pose:
    """EE pose with the RAM fully seated."""
    slot = geometry.slot_in_world()
    bottom = slot.apply(np.array([0.0, 0.0, -geometry.depth]))
    return Pose(bottom + slot.R @ np.array([0.0, 0.0, geometry.grip_height]), slot.q)


def check_outcome(world: WorldState, goal: Pose) -> Outcome:
    if world.safety_latched:
        return Outcome.FAILED
    geo = world.geometry
    slot = geo.slot_in_world()
    err = slot.R.T @ (world.ram_pose.t - goal.t)
    lateral = math.hypot(err[0], err[1])
    if lateral > CAPTURE_RADIUS:
        return Outcome.FAILED
    if abs(err[2]) < DEPTH_TOLERANCE and lateral < geo.clearance:
        return Outcome.SUCCESS
    return Outcome.ONGOING


def initial_world(geometry: SlotGeometry, lateral: np.ndarray, height: float, seed: int = 0) -> WorldState:
    """World with the RAM at rest ``height`` above the slot opening, offset laterally."""
    slot = geometry.slot_in_world()
    bottom = slot.apply(np.array([lateral[0], lateral[1], height]))
    ee = Pose(bottom + slot.R @ np.array([0.0, 0.0, geometry.grip_height]), slot.q)
    return WorldState(geometry=geometry, ram_pose=ee, commanded_pose=ee, rng_seed=seed)


def sample_initial_condition(
    rng: np.random.Generator,
    error_range: Tuple[float, float],
    geometry: SlotGeometry = SlotGeometry(),
    start_height: float = 0.0005,
    seed: int = 0,
) -> WorldState:
    lo, hi = error_range
    if not 0.0 <= lo <= hi:
        raise ValueError("error range must satisfy 0 <= lo <= hi")
    r = rng.uniform(lo, hi)
    phi = rng.uniform(0.0, 2.0 * math.pi)
    return initial_world(geometry, np.array([r * math.cos(phi), r * math.sin(phi)]), start_height, seed)
