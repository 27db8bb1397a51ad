"""Deterministic kinematic tabletop simulator for the long-horizon skill tasks.

Skills resolve instantly to their postconditions: there is no contact
dynamics, only attachment, support stacking, and axis-aligned push corridors.
All geometry is axis-aligned boxes on a 1 m x 1 m table with a 0.3 m reach
ceiling. The simulator mutates nothing in place: ``execute_skill`` returns a
fresh ``WorldState`` and is a pure function of its inputs.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

import numpy as np

from .skill_space import (
    DELTA_RANGE,
    SkillId,
    X_RANGE,
    Y_RANGE,
    Z_RANGE,
)


class ObjectKind(str, Enum):
    BLOCK = "block"
    BROOM = "broom"
    TOY = "toy"
    DUSTPAN_ZONE = "dustpan_zone"
    DRAWER = "drawer"
    SKILLET = "skillet"
    SAUSAGE = "sausage"
    BUN_ZONE = "bun_zone"
    STOVE_ZONE = "stove_zone"
    TARGET_ZONE = "target_zone"


ZONE_KINDS = frozenset({
    ObjectKind.DUSTPAN_ZONE, ObjectKind.BUN_ZONE,
    ObjectKind.STOVE_ZONE, ObjectKind.TARGET_ZONE,
})


class SafetyViolation(str, Enum):
    OUT_OF_WORKSPACE = "out_of_workspace"
    COLLISION = "collision"
    OBJECT_LOST = "object_lost"


class SkillNotAvailableError(ValueError):
    """Raised when a skill outside the task's catalog is executed."""


@dataclass(frozen=True)
class Workspace:
    x_range: tuple[float, float] = X_RANGE
    y_range: tuple[float, float] = Y_RANGE
    z_range: tuple[float, float] = Z_RANGE
    table_z: float = 0.0

    def clamp(self, p: np.ndarray) -> np.ndarray:
        lo = np.array([self.x_range[0], self.y_range[0], self.z_range[0]])
        hi = np.array([self.x_range[1], self.y_range[1], self.z_range[1]])
        return np.clip(p, lo, hi)

    def contains(self, p: np.ndarray) -> bool:
        return (self.x_range[0] <= p[0] <= self.x_range[1]
                and self.y_range[0] <= p[1] <= self.y_range[1]
                and self.z_range[0] <= p[2] <= self.z_range[1])


DEFAULT_WORKSPACE = Workspace()


@dataclass(frozen=True)
class Tolerances:
    """Geometric tolerances; defaults sized for the 1 m workspace."""

    r_pick: float = 0.03        # xy attach radius and |dz| tolerance for Pick
    w_push: float = 0.04        # push corridor half-width
    tau_aff: float = 0.10       # affordance keypoint radius
    r_goal: float = 0.05        # reaching goal radius
    eps_stack: float = 0.02     # stacking xy alignment
    eps_drawer: float = 0.01    # drawer considered shut below this offset
    rest_tol: float = 0.005     # "resting on" vertical slack
    overlap_tol: float = 0.002  # collision probe shrink
    place_clearance: float = 0.01  # inflation for place collision scan
    carry_z: float = 0.15       # gripper height after a successful pick
    z_strike: float = 0.01      # commanded depth below this, with nothing to
                                # grasp or set down on, drives into the table


DEFAULT_TOLERANCES = Tolerances()


@dataclass
class ObjectState:
    id: str
    kind: ObjectKind
    position: np.ndarray            # center, meters
    half_extent: np.ndarray
    graspable: bool = False
    pushable: bool = False
    slide_axis: Optional[int] = None      # drawers only
    closed_center: Optional[float] = None  # drawer center coord when shut
    max_offset: Optional[float] = None

    @property
    def top(self) -> float:
        return float(self.position[2] + self.half_extent[2])

    @property
    def bottom(self) -> float:
        return float(self.position[2] - self.half_extent[2])

    @property
    def is_zone(self) -> bool:
        return self.kind in ZONE_KINDS

    def open_offset(self) -> float:
        if self.slide_axis is None or self.closed_center is None:
            return 0.0
        return float(self.closed_center - self.position[self.slide_axis])

    def copy(self) -> "ObjectState":
        return ObjectState(self.id, self.kind, self.position.copy(),
                           self.half_extent.copy(), self.graspable, self.pushable,
                           self.slide_axis, self.closed_center, self.max_offset)


@dataclass
class WorldState:
    objects: list[ObjectState]
    gripper_pos: np.ndarray
    holding: Optional[str] = None
    task_stage: int = 0
    step_count: int = 0

    def obj(self, obj_id: str) -> ObjectState:
        for o in self.objects:
            if o.id == obj_id:
                return o
        raise KeyError(f"no object {obj_id!r}")

    def copy(self) -> "WorldState":
        return WorldState([o.copy() for o in self.objects], self.gripper_pos.copy(),
                          self.holding, self.task_stage, self.step_count)

    def state_hash(self) -> str:
        h = hashlib.sha256()
        for o in self.objects:
            h.update(o.id.encode())
            h.update(o.position.tobytes())
            h.update(o.half_extent.tobytes())
        h.update(self.gripper_pos.tobytes())
        h.update((self.holding or "").encode())
        h.update(str(self.task_stage).encode())
        h.update(str(self.step_count).encode())
        return h.hexdigest()[:16]


@dataclass(frozen=True)
class Observation:
    values: np.ndarray
    layout: tuple[tuple[str, int, int], ...]

    def slice(self, name: str) -> np.ndarray:
        for label, start, stop in self.layout:
            if label == name:
                return self.values[start:stop]
        raise KeyError(name)


@dataclass(frozen=True)
class StepOutcome:
    next_state: WorldState
    env_reward: float
    affordance_penalty: float
    success: bool
    safety_violation: Optional[SafetyViolation]
    executed: bool


@dataclass(frozen=True)
class TaskSpec:
    name: str
    available_skills: tuple[SkillId, ...]
    obs_dim: int
    max_steps: int
    stage_count: int
    keypoint_fn: Callable[["WorldState", SkillId], list[np.ndarray]]
    reset_fn: Callable[[np.random.Generator, Tolerances], WorldState]
    feature_fn: Callable[["WorldState"], tuple[np.ndarray, tuple]]
    milestone_fn: Callable[["WorldState", Tolerances], tuple[bool, ...]]
    success_fn: Callable[["WorldState", Tolerances], bool]
    gripper_in_base: bool = False


# ---------------------------------------------------------------------------
# geometry helpers


def _footprints_overlap(o: ObjectState, center_xy: np.ndarray, half: np.ndarray,
                        inflate: float = 0.0) -> bool:
    return (abs(o.position[0] - center_xy[0]) < o.half_extent[0] + half[0] + inflate
            and abs(o.position[1] - center_xy[1]) < o.half_extent[1] + half[1] + inflate)


def _point_in_footprint(o: ObjectState, p: np.ndarray, shrink: float = 0.0) -> bool:
    return (abs(p[0] - o.position[0]) < o.half_extent[0] - shrink
            and abs(p[1] - o.position[1]) < o.half_extent[1] - shrink)


def support_top(objects: list[ObjectState], xy: np.ndarray, half: np.ndarray,
                exclude: set[str], table_z: float) -> float:
    """Height of the tallest face under a footprint (zones count, held don't)."""
    top = table_z
    for o in objects:
        if o.id in exclude:
            continue
        if _footprints_overlap(o, xy, half):
            top = max(top, o.top)
    return top


def resting_on(upper: ObjectState, lower: ObjectState, tol: Tolerances) -> bool:
    return (_footprints_overlap(lower, upper.position[:2], np.zeros(2))
            and abs(upper.bottom - lower.top) <= tol.rest_tol)


def _near_any_solid(objects: list[ObjectState], p: np.ndarray, radius: float) -> bool:
    for o in objects:
        if o.is_zone:
            continue
        if float(np.hypot(o.position[0] - p[0], o.position[1] - p[1])) <= radius:
            return True
    return False


# ---------------------------------------------------------------------------
# skill execution


def _sync_held(state: WorldState) -> None:
    if state.holding is not None:
        state.obj(state.holding).position = state.gripper_pos.copy()


def _update_stage(state: WorldState, task: TaskSpec, tol: Tolerances) -> None:
    flags = task.milestone_fn(state, tol)
    stage = state.task_stage
    while stage < len(flags) and flags[stage]:
        stage += 1
    state.task_stage = stage


def execute_skill(state: WorldState, action, task: TaskSpec,
                  workspace: Workspace = DEFAULT_WORKSPACE,
                  tol: Tolerances = DEFAULT_TOLERANCES) -> StepOutcome:
    """Apply one skill kinematically and return the outcome.

    The caller is responsible for gating: a vetoed decision simply never
    reaches this function. ``state`` is not mutated.
    """
    skill = action.skill
    if skill not in task.available_skills:
        raise SkillNotAvailableError(f"{skill.name} not available in task {task.name}")
    penalty = affordance_penalty(state, action, task, tol)
    ns = state.copy()
    p = np.asarray(action.params_world[:3], dtype=float)
    violation: Optional[SafetyViolation] = None

    def ws_violation(point: np.ndarray) -> Optional[SafetyViolation]:
        if point[2] < workspace.table_z or not workspace.contains(point):
            return SafetyViolation.OUT_OF_WORKSPACE
        return None

    if skill == SkillId.REACH:
        violation = ws_violation(p)
        ns.gripper_pos = workspace.clamp(p)

    elif skill == SkillId.PICK:
        violation = ws_violation(p)
        attached: Optional[ObjectState] = None
        if ns.holding is None:
            candidates = []
            for o in ns.objects:
                if not o.graspable:
                    continue
                d_xy = float(np.hypot(o.position[0] - p[0], o.position[1] - p[1]))
                if d_xy <= tol.r_pick and abs(o.position[2] - p[2]) <= tol.r_pick:
                    # rank stacked candidates by full 3D distance
                    candidates.append((float(np.linalg.norm(o.position - p)), o))
            if candidates:
                attached = min(candidates, key=lambda c: c[0])[1]
                ns.holding = attached.id
        # Jamming the probe point into a solid object that is not the grasp
        # target counts as a collision, as does descending to table level with
        # nothing anywhere nearby to grasp (a careful grasp primitive aborts
        # on contact near an object; a bare-table descent faults).
        if violation is None:
            for o in ns.objects:
                if o.is_zone or (attached is not None and o.id == attached.id):
                    continue
                if _point_in_footprint(o, p, shrink=tol.overlap_tol) and p[2] < o.top:
                    violation = SafetyViolation.COLLISION
                    break
        if (violation is None and attached is None
                and p[2] < workspace.table_z + tol.z_strike
                and not _near_any_solid(ns.objects, p, 2 * tol.r_pick)):
            violation = SafetyViolation.COLLISION
        if attached is not None:
            ns.gripper_pos = workspace.clamp(np.array([p[0], p[1], tol.carry_z]))
        else:
            ns.gripper_pos = workspace.clamp(p)
        _sync_held(ns)

    elif skill == SkillId.PLACE:
        violation = ws_violation(p)
        if ns.holding is not None:
            held = ns.obj(ns.holding)
            xy = workspace.clamp(p)[:2]
            base = support_top(ns.objects, xy, held.half_extent,
                               exclude={held.id}, table_z=workspace.table_z)
            # Placement is compliant: the object settles at its rest height on
            # the support regardless of the commanded depth.
            target_z = base + float(held.half_extent[2])
            held.position = workspace.clamp(np.array([xy[0], xy[1], target_z]))
            ns.holding = None
            if violation is None:
                for o in ns.objects:
                    if o.id == held.id or o.is_zone:
                        continue
                    if (_footprints_overlap(o, held.position[:2], held.half_extent,
                                            inflate=tol.place_clearance)
                            and o.top > base + 1e-9 and o.bottom < held.top - 1e-9):
                        violation = SafetyViolation.COLLISION
                        break
        elif (violation is None and p[2] < workspace.table_z + tol.z_strike
                and not _near_any_solid(ns.objects, p, 2 * tol.r_pick)):
            violation = SafetyViolation.COLLISION  # empty gripper into bare table
        ns.gripper_pos = workspace.clamp(p)
        _sync_held(ns)

    elif skill in (SkillId.PUSH_X, SkillId.PUSH_Y):
        axis = 0 if skill == SkillId.PUSH_X else 1
        perp = 1 - axis
        delta = float(action.params_world[3])
        violation = ws_violation(p)
        start = workspace.clamp(p)
        lo_axis = min(start[axis], start[axis] + delta)
        hi_axis = max(start[axis], start[axis] + delta)
        ws_lo, ws_hi = (workspace.x_range, workspace.y_range)[axis]
        displacements: dict[str, float] = {}
        drawer_moves: list[tuple[ObjectState, float]] = []
        for o in ns.objects:
            if o.id == ns.holding or not o.pushable:
                continue
            if task.name == "sweeping" and o.kind == ObjectKind.TOY:
                broom_held = (ns.holding is not None
                              and ns.obj(ns.holding).kind == ObjectKind.BROOM)
                if not broom_held:
                    continue
            if abs(o.position[perp] - start[perp]) > tol.w_push:
                continue
            if not (lo_axis - 1e-12 <= o.position[axis] <= hi_axis + 1e-12):
                continue
            if o.kind == ObjectKind.DRAWER:
                if o.slide_axis != axis:
                    continue
                lo_c = o.closed_center - o.max_offset
                new_c = float(np.clip(o.position[axis] + delta, lo_c, o.closed_center))
                d_eff = new_c - o.position[axis]
                displacements[o.id] = d_eff
                drawer_moves.append((o, d_eff))
            else:
                target = o.position[axis] + delta
                clamped = float(np.clip(target, ws_lo, ws_hi))
                if (target < ws_lo - o.half_extent[axis]
                        or target > ws_hi + o.half_extent[axis]):
                    if violation is None:
                        violation = SafetyViolation.OBJECT_LOST
                displacements[o.id] = clamped - o.position[axis]
        # Objects resting inside a moved drawer ride along with it.
        for drawer, d_eff in drawer_moves:
            for o in ns.objects:
                if o.id in (drawer.id, ns.holding) or o.is_zone:
                    continue
                if (_point_in_footprint(drawer, o.position)
                        and abs(o.bottom - drawer.top) <= 2 * tol.rest_tol):
                    displacements[o.id] = d_eff
        for obj_id, d in displacements.items():
            o = ns.obj(obj_id)
            o.position[axis] += d
            o.position = workspace.clamp(o.position)
        end = start.copy()
        end[axis] += delta
        ns.gripper_pos = workspace.clamp(end)
        _sync_held(ns)

    elif skill == SkillId.RELEASE:
        if ns.holding is not None:
            held = ns.obj(ns.holding)
            xy = ns.gripper_pos[:2]
            base = support_top(ns.objects, xy, held.half_extent,
                               exclude={held.id}, table_z=workspace.table_z)
            held.position = workspace.clamp(
                np.array([xy[0], xy[1], base + float(held.half_extent[2])]))
            ns.holding = None
    else:  # pragma: no cover - enum is exhaustive
        raise SkillNotAvailableError(f"unhandled skill {skill}")

    ns.step_count += 1
    _update_stage(ns, task, tol)
    success = task.success_fn(ns, tol)
    return StepOutcome(next_state=ns, env_reward=1.0 if success else 0.0,
                       affordance_penalty=penalty, success=success,
                       safety_violation=violation, executed=True)


def vetoed_outcome(state: WorldState, action, task: TaskSpec,
                   tol: Tolerances = DEFAULT_TOLERANCES) -> StepOutcome:
    """Outcome for a decision that was proposed but never executed."""
    return StepOutcome(next_state=state, env_reward=0.0,
                       affordance_penalty=affordance_penalty(state, action, task, tol),
                       success=False, safety_violation=None, executed=False)


def affordance_penalty(state: WorldState, action, task: TaskSpec,
                       tol: Tolerances = DEFAULT_TOLERANCES) -> float:
    """-0.1 when the position parameter is far from every task keypoint."""
    if action.skill == SkillId.RELEASE:
        return 0.0
    keypoints = task.keypoint_fn(state, action.skill)
    p = np.asarray(action.params_world[:3], dtype=float)
    for kp in keypoints:
        if float(np.linalg.norm(p - kp)) <= tol.tau_aff:
            return 0.0
    return -0.1


def check_success(state: WorldState, task: TaskSpec,
                  tol: Tolerances = DEFAULT_TOLERANCES) -> bool:
    return task.success_fn(state, tol)


def reset(task: TaskSpec, seed: int, tol: Tolerances = DEFAULT_TOLERANCES) -> WorldState:
    """Seeded task-specific randomized initial state; pure in (task, seed)."""
    rng = np.random.default_rng(seed % (2 ** 63))
    state = task.reset_fn(rng, tol)
    state.task_stage = 0
    state.step_count = 0
    return state


def observe(state: WorldState, task: TaskSpec, include_gripper: bool = False) -> Observation:
    """Task feature vector; the reduced layout omits the gripper unless the
    task's own features are the gripper (reaching)."""
    values, layout = task.feature_fn(state)
    if include_gripper and not task.gripper_in_base:
        n = values.size
        extra = np.concatenate([state.gripper_pos,
                                [1.0 if state.holding else 0.0]])
        values = np.concatenate([values, extra])
        layout = layout + (("gripper", n, n + 3), ("gripper_closed", n + 3, n + 4))
    return Observation(values=values, layout=layout)


def render_doc(state: WorldState, task: TaskSpec,
               workspace: Workspace = DEFAULT_WORKSPACE) -> dict:
    """JSON scene snapshot consumed by the gateway and the console."""
    objects = []
    for o in state.objects:
        entry = {
            "id": o.id,
            "kind": o.kind.value,
            "position": [round(float(v), 6) for v in o.position],
            "half_extent": [round(float(v), 6) for v in o.half_extent],
            "held": o.id == state.holding,
            "graspable": o.graspable,
            "pushable": o.pushable,
        }
        if o.kind == ObjectKind.DRAWER:
            entry["open_offset"] = round(o.open_offset(), 6)
        objects.append(entry)
    return {
        "task": task.name,
        "workspace": {
            "x_range": list(workspace.x_range),
            "y_range": list(workspace.y_range),
            "z_range": list(workspace.z_range),
            "table_z": workspace.table_z,
        },
        "gripper": [round(float(v), 6) for v in state.gripper_pos],
        "holding": state.holding,
        "task_stage": state.task_stage,
        "step_count": state.step_count,
        "state_hash": state.state_hash(),
        "objects": objects,
    }


# ---------------------------------------------------------------------------
# task catalog

_REACH_TARGET = np.array([0.70, 0.70, 0.10])


def _random_gripper(rng: np.random.Generator) -> np.ndarray:
    return np.array([rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9),
                     rng.uniform(0.05, 0.25)])


def _box(obj_id: str, kind: ObjectKind, x: float, y: float, half: tuple,
         graspable: bool = False, pushable: bool = False) -> ObjectState:
    half_arr = np.array(half, dtype=float)
    return ObjectState(obj_id, kind, np.array([x, y, half_arr[2]]), half_arr,
                       graspable=graspable, pushable=pushable)


def _zone(obj_id: str, kind: ObjectKind, x: float, y: float,
          half_xy: tuple[float, float], z: float | None = None,
          half_z: float = 0.005) -> ObjectState:
    pos_z = half_z if z is None else z
    return ObjectState(obj_id, kind, np.array([x, y, pos_z]),
                       np.array([half_xy[0], half_xy[1], half_z]))


def _reset_reaching(rng: np.random.Generator, tol: Tolerances) -> WorldState:
    target = ObjectState("target", ObjectKind.TARGET_ZONE, _REACH_TARGET.copy(),
                         np.array([0.05, 0.05, 0.05]))
    while True:
        gripper = _random_gripper(rng)
        if np.linalg.norm(gripper - _REACH_TARGET) > tol.r_goal + 0.05:
            break
    return WorldState(objects=[target], gripper_pos=gripper)


def _features_reaching(state: WorldState):
    vals = np.concatenate([state.gripper_pos, [1.0 if state.holding else 0.0]])
    return vals, (("gripper", 0, 3), ("gripper_closed", 3, 4))


def _at_target(state: WorldState, tol: Tolerances) -> bool:
    return float(np.linalg.norm(state.gripper_pos - state.obj("target").position)) <= tol.r_goal


def _kp_reaching(state: WorldState, skill: SkillId) -> list[np.ndarray]:
    if skill == SkillId.REACH:
        return [state.obj("target").position.copy()]
    return []


def _reset_stacking(rng: np.random.Generator, tol: Tolerances) -> WorldState:
    while True:
        sx, sy = rng.uniform(0.2, 0.8, size=2)
        lx, ly = rng.uniform(0.2, 0.8, size=2)
        if np.hypot(sx - lx, sy - ly) >= 0.12:
            break
    small = _box("small_block", ObjectKind.BLOCK, sx, sy, (0.02, 0.02, 0.02),
                 graspable=True, pushable=True)
    large = _box("large_block", ObjectKind.BLOCK, lx, ly, (0.03, 0.03, 0.03),
                 graspable=True, pushable=True)
    return WorldState(objects=[small, large], gripper_pos=_random_gripper(rng))


def _features_stacking(state: WorldState):
    vals = np.concatenate([state.obj("small_block").position,
                           state.obj("large_block").position])
    return vals, (("small_block", 0, 3), ("large_block", 3, 6))


def _stacked(state: WorldState, tol: Tolerances) -> bool:
    small, large = state.obj("small_block"), state.obj("large_block")
    if state.holding == "small_block":
        return False
    xy = float(np.hypot(small.position[0] - large.position[0],
                        small.position[1] - large.position[1]))
    return xy <= tol.eps_stack and abs(small.bottom - large.top) <= tol.rest_tol


def _milestones_stacking(state: WorldState, tol: Tolerances):
    return (state.holding == "small_block", _stacked(state, tol))


def _top_point(o: ObjectState, lift: float) -> np.ndarray:
    return np.array([o.position[0], o.position[1], o.top + lift])


def _place_lift(state: WorldState) -> float:
    if state.holding is not None:
        return float(state.obj(state.holding).half_extent[2])
    return 0.02


def _kp_stacking(state: WorldState, skill: SkillId) -> list[np.ndarray]:
    small, large = state.obj("small_block"), state.obj("large_block")
    if skill == SkillId.PICK:
        return [o.position.copy() for o in (small, large) if o.id != state.holding]
    if skill == SkillId.PLACE:
        # The only useful support site is the large block's top face (the
        # small top is never a target and would act as a decoy attractor).
        target = large if state.holding != "large_block" else small
        return [_top_point(target, _place_lift(state))]
    return []


def _reset_sweeping(rng: np.random.Generator, tol: Tolerances) -> WorldState:
    tx = rng.uniform(0.30, 0.55)
    ty = rng.uniform(0.35, 0.65)
    while True:
        bx = rng.uniform(0.15, 0.70)
        by = rng.uniform(0.20, 0.80)
        if np.hypot(bx - tx, by - ty) >= 0.12:
            break
    toy = _box("toy", ObjectKind.TOY, tx, ty, (0.02, 0.02, 0.02), pushable=True)
    broom = _box("broom", ObjectKind.BROOM, bx, by, (0.02, 0.06, 0.02), graspable=True)
    dustpan = _zone("dustpan", ObjectKind.DUSTPAN_ZONE, 0.90, 0.50, (0.06, 0.20))
    return WorldState(objects=[toy, broom, dustpan], gripper_pos=_random_gripper(rng))


def _features_sweeping(state: WorldState):
    vals = np.concatenate([state.obj("broom").position,
                           state.obj("toy").position[:2],
                           [1.0 if state.holding == "broom" else 0.0]])
    return vals, (("broom", 0, 3), ("toy_xy", 3, 5), ("broom_held", 5, 6))


def _toy_in_dustpan(state: WorldState, tol: Tolerances) -> bool:
    return _point_in_footprint(state.obj("dustpan"), state.obj("toy").position)


def _milestones_sweeping(state: WorldState, tol: Tolerances):
    return (state.holding == "broom", _toy_in_dustpan(state, tol))


def _kp_sweeping(state: WorldState, skill: SkillId) -> list[np.ndarray]:
    if skill == SkillId.PICK:
        return [state.obj("broom").position.copy()] if state.holding != "broom" else []
    if skill in (SkillId.PUSH_X, SkillId.PUSH_Y):
        return [state.obj("toy").position.copy()]
    return []


_DRAWER_CLOSED_X = 0.80
_DRAWER_Y = 0.30


def _reset_collecting(rng: np.random.Generator, tol: Tolerances) -> WorldState:
    toy = _box("toy", ObjectKind.TOY, rng.uniform(0.15, 0.45), rng.uniform(0.55, 0.85),
               (0.02, 0.02, 0.02), graspable=True)
    offset = rng.uniform(0.08, 0.15)
    drawer = ObjectState("drawer", ObjectKind.DRAWER,
                         np.array([_DRAWER_CLOSED_X - offset, _DRAWER_Y, 0.02]),
                         np.array([0.06, 0.08, 0.02]), pushable=True,
                         slide_axis=0, closed_center=_DRAWER_CLOSED_X, max_offset=0.15)
    return WorldState(objects=[toy, drawer], gripper_pos=_random_gripper(rng))


def _toy_in_drawer(state: WorldState, tol: Tolerances) -> bool:
    toy, drawer = state.obj("toy"), state.obj("drawer")
    if state.holding == "toy":
        return False
    return (_point_in_footprint(drawer, toy.position)
            and abs(toy.bottom - drawer.top) <= 2 * tol.rest_tol)


def _collecting_done(state: WorldState, tol: Tolerances) -> bool:
    return (_toy_in_drawer(state, tol)
            and state.obj("drawer").open_offset() <= tol.eps_drawer)


def _features_collecting(state: WorldState):
    drawer = state.obj("drawer")
    vals = np.concatenate([
        state.obj("toy").position,
        [drawer.open_offset(),
         1.0 if state.holding == "toy" else 0.0,
         1.0 if _toy_in_drawer(state, DEFAULT_TOLERANCES) else 0.0],
    ])
    return vals, (("toy", 0, 3), ("drawer_offset", 3, 4),
                  ("toy_held", 4, 5), ("toy_in_drawer", 5, 6))


def _milestones_collecting(state: WorldState, tol: Tolerances):
    return (state.holding == "toy", _toy_in_drawer(state, tol),
            _collecting_done(state, tol))


def _kp_collecting(state: WorldState, skill: SkillId) -> list[np.ndarray]:
    toy, drawer = state.obj("toy"), state.obj("drawer")
    if skill == SkillId.PICK:
        return [toy.position.copy()] if state.holding != "toy" else []
    if skill == SkillId.PLACE:
        return [_top_point(drawer, _place_lift(state))]
    if skill in (SkillId.PUSH_X, SkillId.PUSH_Y):
        return [drawer.position.copy()]
    return []


def _reset_cooking(rng: np.random.Generator, tol: Tolerances) -> WorldState:
    skillet = _box("skillet", ObjectKind.SKILLET, rng.uniform(0.15, 0.45),
                   rng.uniform(0.15, 0.45), (0.05, 0.05, 0.015), graspable=True)
    sausage = _box("sausage", ObjectKind.SAUSAGE, rng.uniform(0.15, 0.45),
                   rng.uniform(0.55, 0.85), (0.04, 0.015, 0.015), graspable=True)
    stove = _zone("stove", ObjectKind.STOVE_ZONE, 0.75, 0.70, (0.07, 0.07))
    bun = _zone("bun", ObjectKind.BUN_ZONE, 0.75, 0.25, (0.06, 0.05))
    return WorldState(objects=[skillet, sausage, stove, bun],
                      gripper_pos=_random_gripper(rng))


def _skillet_on_stove(state: WorldState, tol: Tolerances) -> bool:
    skillet, stove = state.obj("skillet"), state.obj("stove")
    return (state.holding != "skillet"
            and _point_in_footprint(stove, skillet.position)
            and abs(skillet.bottom - stove.top) <= 2 * tol.rest_tol)


def _sausage_on_skillet(state: WorldState, tol: Tolerances) -> bool:
    sausage, skillet = state.obj("sausage"), state.obj("skillet")
    return (state.holding != "sausage"
            and _point_in_footprint(skillet, sausage.position)
            and abs(sausage.bottom - skillet.top) <= 2 * tol.rest_tol)


def _sausage_in_bun(state: WorldState, tol: Tolerances) -> bool:
    sausage, bun = state.obj("sausage"), state.obj("bun")
    return (state.holding != "sausage"
            and _point_in_footprint(bun, sausage.position)
            and abs(sausage.bottom - bun.top) <= 2 * tol.rest_tol)


def _milestones_cooking(state: WorldState, tol: Tolerances):
    return (_skillet_on_stove(state, tol), _sausage_on_skillet(state, tol),
            _sausage_in_bun(state, tol))


def _cooking_done(state: WorldState, tol: Tolerances) -> bool:
    # The stage chain is ordered; success means every milestone fired in turn.
    return state.task_stage >= 3


def _features_cooking(state: WorldState):
    vals = np.concatenate([
        state.obj("sausage").position,
        state.obj("skillet").position,
        [1.0 if _skillet_on_stove(state, DEFAULT_TOLERANCES) else 0.0,
         1.0 if _sausage_on_skillet(state, DEFAULT_TOLERANCES) else 0.0,
         1.0 if _sausage_in_bun(state, DEFAULT_TOLERANCES) else 0.0,
         1.0 if state.holding == "skillet" else 0.0,
         1.0 if state.holding == "sausage" else 0.0],
    ])
    return vals, (("sausage", 0, 3), ("skillet", 3, 6), ("skillet_on_stove", 6, 7),
                  ("sausage_on_skillet", 7, 8), ("sausage_in_bun", 8, 9),
                  ("holding_skillet", 9, 10), ("holding_sausage", 10, 11))


def _kp_cooking(state: WorldState, skill: SkillId) -> list[np.ndarray]:
    skillet, sausage = state.obj("skillet"), state.obj("sausage")
    stove, bun = state.obj("stove"), state.obj("bun")
    if skill == SkillId.PICK:
        return [o.position.copy() for o in (skillet, sausage) if o.id != state.holding]
    if skill == SkillId.PLACE:
        lift = _place_lift(state)
        points = [_top_point(stove, lift), _top_point(bun, lift)]
        if state.holding != "skillet":
            points.append(_top_point(skillet, lift))
        return points
    return []


TASKS: dict[str, TaskSpec] = {
    "reaching": TaskSpec(
        name="reaching",
        available_skills=(SkillId.REACH, SkillId.RELEASE),
        obs_dim=4, max_steps=5, stage_count=2,
        keypoint_fn=_kp_reaching, reset_fn=_reset_reaching,
        feature_fn=_features_reaching,
        milestone_fn=lambda s, t: (_at_target(s, t),),
        success_fn=_at_target, gripper_in_base=True,
    ),
    "stacking": TaskSpec(
        name="stacking",
        available_skills=(SkillId.PICK, SkillId.PLACE),
        obs_dim=6, max_steps=8, stage_count=3,
        keypoint_fn=_kp_stacking, reset_fn=_reset_stacking,
        feature_fn=_features_stacking,
        milestone_fn=_milestones_stacking, success_fn=_stacked,
    ),
    "sweeping": TaskSpec(
        name="sweeping",
        available_skills=(SkillId.PICK, SkillId.PUSH_X, SkillId.PUSH_Y),
        obs_dim=6, max_steps=10, stage_count=3,
        keypoint_fn=_kp_sweeping, reset_fn=_reset_sweeping,
        feature_fn=_features_sweeping,
        milestone_fn=_milestones_sweeping, success_fn=_toy_in_dustpan,
    ),
    "collecting_toy": TaskSpec(
        name="collecting_toy",
        available_skills=(SkillId.PICK, SkillId.PLACE, SkillId.PUSH_X, SkillId.PUSH_Y),
        obs_dim=6, max_steps=12, stage_count=4,
        keypoint_fn=_kp_collecting, reset_fn=_reset_collecting,
        feature_fn=_features_collecting,
        milestone_fn=_milestones_collecting, success_fn=_collecting_done,
    ),
    "cooking_hotdog": TaskSpec(
        name="cooking_hotdog",
        available_skills=(SkillId.PICK, SkillId.PLACE),
        obs_dim=11, max_steps=16, stage_count=4,
        keypoint_fn=_kp_cooking, reset_fn=_reset_cooking,
        feature_fn=_features_cooking,
        milestone_fn=_milestones_cooking, success_fn=_cooking_done,
    ),
}


def get_task(name: str) -> TaskSpec:
    key = name.replace("-", "_")
    if key not in TASKS:
        raise KeyError(f"unknown task {name!r}; choose from {sorted(TASKS)}")
    return TASKS[key]
