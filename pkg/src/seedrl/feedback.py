"""Feedback providers: scripted stage oracle, Q-threshold oracle, human bridge.

Every provider maps one proposed decision to a signal in {-1, 0, +1}. The
scripted oracle is strictly binary; the neutral 0 is reserved for human
timeouts. Oracles are deterministic given their explicit state (the
Q-threshold oracle advances its acceptance ratio after every query).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Protocol

import numpy as np

from . import seed_agent
from .sim_tabletop import (
    DEFAULT_TOLERANCES,
    TaskSpec,
    Tolerances,
    WorldState,
    _place_lift,
    _toy_in_drawer,
)
from .skill_space import MAX_PARAM_DIM, SkillAction, SkillId, squash_params, unsquash_params

log = logging.getLogger("seedrl.feedback")

SOURCE_SCRIPT = "oracle_script"
SOURCE_Q = "oracle_q"
SOURCE_HUMAN = "human"

# Approval radius around the stage keypoint; slightly wider than the pick
# attach radius so near-misses that would still succeed read as positive.
TAU_OK = 0.04


@dataclass(frozen=True)
class FeedbackSignal:
    step_id: int
    value: int                 # -1, 0, +1
    source: str
    latency_ms: int = 0
    timed_out: bool = False

    def __post_init__(self) -> None:
        if self.value not in (-1, 0, 1):
            raise ValueError(f"feedback value {self.value} out of range")


@dataclass(frozen=True)
class FeedbackRequest:
    step_id: int
    render: dict
    skill: SkillId
    params_world: tuple
    overlay: dict


@dataclass(frozen=True)
class ScriptedDecision:
    """What the stage script would do in the current state."""

    skill: SkillId
    keypoint: Optional[np.ndarray]   # None for parameterless skills
    delta: Optional[float] = None    # push displacement; sign is what matters

    @property
    def delta_sign(self) -> Optional[int]:
        if self.delta is None:
            return None
        return 1 if self.delta > 0 else -1


def _script_reaching(state: WorldState, tol: Tolerances) -> ScriptedDecision:
    return ScriptedDecision(SkillId.REACH, state.obj("target").position.copy())


def _script_stacking(state: WorldState, tol: Tolerances) -> ScriptedDecision:
    small, large = state.obj("small_block"), state.obj("large_block")
    if state.holding == "small_block":
        target = np.array([large.position[0], large.position[1],
                           large.top + small.half_extent[2]])
        return ScriptedDecision(SkillId.PLACE, target)
    return ScriptedDecision(SkillId.PICK, small.position.copy())


def _script_sweeping(state: WorldState, tol: Tolerances) -> ScriptedDecision:
    toy, dustpan = state.obj("toy"), state.obj("dustpan")
    if state.holding != "broom":
        return ScriptedDecision(SkillId.PICK, state.obj("broom").position.copy())
    delta = float(np.clip(dustpan.position[0] - toy.position[0], -0.3, 0.3))
    return ScriptedDecision(SkillId.PUSH_X, toy.position.copy(), delta=delta)


def _script_collecting(state: WorldState, tol: Tolerances) -> ScriptedDecision:
    toy, drawer = state.obj("toy"), state.obj("drawer")
    if state.holding == "toy":
        target = np.array([drawer.position[0], drawer.position[1],
                           drawer.top + toy.half_extent[2]])
        return ScriptedDecision(SkillId.PLACE, target)
    if _toy_in_drawer(state, tol):
        delta = float(min(drawer.open_offset(), 0.3))
        return ScriptedDecision(SkillId.PUSH_X, drawer.position.copy(), delta=max(delta, 1e-3))
    return ScriptedDecision(SkillId.PICK, toy.position.copy())


def _script_cooking(state: WorldState, tol: Tolerances) -> ScriptedDecision:
    skillet, sausage = state.obj("skillet"), state.obj("sausage")
    stove, bun = state.obj("stove"), state.obj("bun")
    lift = _place_lift(state)
    if state.task_stage == 0:
        if state.holding == "skillet":
            return ScriptedDecision(SkillId.PLACE, np.array(
                [stove.position[0], stove.position[1], stove.top + lift]))
        return ScriptedDecision(SkillId.PICK, skillet.position.copy())
    if state.task_stage == 1:
        if state.holding == "sausage":
            return ScriptedDecision(SkillId.PLACE, np.array(
                [skillet.position[0], skillet.position[1], skillet.top + lift]))
        return ScriptedDecision(SkillId.PICK, sausage.position.copy())
    if state.holding == "sausage":
        return ScriptedDecision(SkillId.PLACE, np.array(
            [bun.position[0], bun.position[1], bun.top + lift]))
    return ScriptedDecision(SkillId.PICK, sausage.position.copy())


_STAGE_TABLES: dict[str, Callable[[WorldState, Tolerances], ScriptedDecision]] = {
    "reaching": _script_reaching,
    "stacking": _script_stacking,
    "sweeping": _script_sweeping,
    "collecting_toy": _script_collecting,
    "cooking_hotdog": _script_cooking,
}


def script_decision(state: WorldState, task: TaskSpec,
                    tol: Tolerances = DEFAULT_TOLERANCES) -> ScriptedDecision:
    if task.name not in _STAGE_TABLES:
        raise KeyError(f"no stage table for task {task.name!r}")
    return _STAGE_TABLES[task.name](state, tol)


def scripted_action(state: WorldState, task: TaskSpec,
                    tol: Tolerances = DEFAULT_TOLERANCES) -> SkillAction:
    """The stage-correct action itself (the oracle's own solution policy)."""
    d = script_decision(state, task, tol)
    if d.keypoint is None:
        return squash_params(np.zeros(MAX_PARAM_DIM), d.skill)
    raw = np.zeros(MAX_PARAM_DIM)
    target = d.keypoint.copy()
    if d.delta is not None:
        target = np.concatenate([target, [d.delta]])
    raw[:target.size] = unsquash_params(target, d.skill)[:target.size]
    return squash_params(raw, d.skill)


def oracle_script_feedback(state: WorldState, action: SkillAction, task: TaskSpec,
                           step_id: int = 0, tau_ok: float = TAU_OK,
                           tol: Tolerances = DEFAULT_TOLERANCES) -> FeedbackSignal:
    """+1 iff the proposed skill and position match the stage script.

    The trainer it emulates is safety conscious: an otherwise stage-correct
    action that would cause a safety violation (checked on a dry run of the
    pure simulator) is rejected, mirroring a human vetoing a visibly unsafe
    motion before execution.
    """
    d = script_decision(state, task, tol)
    ok = action.skill == d.skill
    if ok and d.keypoint is not None:
        p = np.asarray(action.params_world[:3], dtype=float)
        ok = float(np.linalg.norm(p - d.keypoint)) <= tau_ok
    if ok and d.delta_sign is not None:
        proposed = float(action.params_world[3])
        ok = proposed != 0.0 and (1 if proposed > 0 else -1) == d.delta_sign
    if ok:
        from .sim_tabletop import execute_skill
        if execute_skill(state, action, task, tol=tol).safety_violation is not None:
            ok = False
    return FeedbackSignal(step_id=step_id, value=1 if ok else -1, source=SOURCE_SCRIPT)


@dataclass
class OracleQConfig:
    """Q-threshold oracle: approve when Q(s,a) >= alpha * Q(s, a*)."""

    oracle_bundle: "seed_agent.PolicyBundle"
    alpha: float = 0.999
    alpha_increment: float = 1e-5

    def __post_init__(self) -> None:
        if not (0.0 < self.alpha <= 1.0):
            raise ValueError(f"alpha {self.alpha} out of (0, 1]")

    def advance(self) -> None:
        self.alpha = min(1.0, self.alpha + self.alpha_increment)


def oracle_q_feedback(obs: np.ndarray, action: SkillAction, cfg: OracleQConfig,
                      step_id: int = 0) -> FeedbackSignal:
    bundle = cfg.oracle_bundle
    obs = np.asarray(obs, dtype=float).reshape(-1)
    if obs.size != bundle.obs_dim:
        raise ValueError(f"obs dim {obs.size} mismatches oracle bundle {bundle.obs_dim}")
    best = seed_agent.sample_action(bundle, obs, mode="deterministic")
    q = seed_agent.critic_predict(bundle, obs, bundle.one_hot(action.skill),
                                  action.params_world)
    q_star = seed_agent.critic_predict(bundle, obs, bundle.one_hot(best.skill),
                                       best.params_world)
    value = 1 if q >= cfg.alpha * q_star else -1
    cfg.advance()
    return FeedbackSignal(step_id=step_id, value=value, source=SOURCE_Q)


class SessionClosedError(RuntimeError):
    """The human-feedback channel went away; training should pause."""


class FeedbackChannel(Protocol):
    """Blocking request/response pipe to a human console (one outstanding)."""

    def request_feedback(self, request: FeedbackRequest,
                         timeout_s: float) -> Optional[tuple[int, int]]:
        """Returns (value, latency_ms), or None when the wait timed out."""
        ...


def human_feedback(request: FeedbackRequest, channel: FeedbackChannel,
                   timeout_s: float = 30.0) -> FeedbackSignal:
    """Block until the console answers the proposal, or time out as neutral."""
    result = channel.request_feedback(request, timeout_s)
    if result is None:
        log.warning("feedback timeout on step %d; treating as neutral", request.step_id)
        return FeedbackSignal(step_id=request.step_id, value=0, source=SOURCE_HUMAN,
                              latency_ms=int(timeout_s * 1000), timed_out=True)
    value, latency_ms = result
    return FeedbackSignal(step_id=request.step_id, value=value, source=SOURCE_HUMAN,
                          latency_ms=latency_ms)
