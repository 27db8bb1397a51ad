"""Discrete skill catalog and the fixed-width continuous parameter encoding.

Every skill owns up to ``MAX_PARAM_DIM`` continuous parameters. Parameters are
produced by actors as unbounded reals, squashed through tanh onto per-skill
bounds, and padded/masked to a fixed width so a single critic can consume a
``(obs, skill one-hot, params)`` concatenation for every skill.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, Sequence

import numpy as np

MAX_PARAM_DIM = 4

# Default workspace extents in meters; the tabletop simulator uses the same
# values unless configured otherwise.
X_RANGE = (0.0, 1.0)
Y_RANGE = (0.0, 1.0)
Z_RANGE = (0.0, 0.3)
DELTA_RANGE = (-0.3, 0.3)


class SkillId(IntEnum):
    """Primitive skills; integer codes are stable for one-hot encoding."""

    REACH = 0
    PICK = 1
    PLACE = 2
    PUSH_X = 3
    PUSH_Y = 4
    RELEASE = 5


PARAM_DIMS: dict[SkillId, int] = {
    SkillId.REACH: 3,
    SkillId.PICK: 3,
    SkillId.PLACE: 3,
    SkillId.PUSH_X: 4,
    SkillId.PUSH_Y: 4,
    SkillId.RELEASE: 0,
}

SKILL_NAMES: dict[SkillId, str] = {
    SkillId.REACH: "reach",
    SkillId.PICK: "pick",
    SkillId.PLACE: "place",
    SkillId.PUSH_X: "push_x",
    SkillId.PUSH_Y: "push_y",
    SkillId.RELEASE: "release",
}

SKILLS_BY_NAME: dict[str, SkillId] = {v: k for k, v in SKILL_NAMES.items()}


@dataclass(frozen=True)
class ParamLayout:
    """Per-skill parameter dimensionality, bounds and padding mask."""

    skill: SkillId
    dim: int
    lows: np.ndarray   # (MAX_PARAM_DIM,), zeros on masked-out slots
    highs: np.ndarray  # (MAX_PARAM_DIM,), zeros on masked-out slots
    mask: np.ndarray   # (MAX_PARAM_DIM,) of {0.0, 1.0}

    def __post_init__(self) -> None:
        if self.dim > MAX_PARAM_DIM:
            raise ValueError(f"skill {self.skill} dim {self.dim} exceeds {MAX_PARAM_DIM}")
        active = self.mask.astype(bool)
        if np.any(self.lows[active] >= self.highs[active]):
            raise ValueError(f"degenerate bounds for {self.skill}")


@dataclass(frozen=True)
class SkillAction:
    """A discrete skill plus its squashed, padded continuous parameters."""

    skill: SkillId
    params_raw: np.ndarray     # tanh-squashed, in [-1, 1], masked slots zero
    params_world: np.ndarray   # bound units (meters), masked slots zero
    mask: np.ndarray


def _make_layout(skill: SkillId,
                 x_range: tuple[float, float],
                 y_range: tuple[float, float],
                 z_range: tuple[float, float],
                 delta_range: tuple[float, float]) -> ParamLayout:
    dim = PARAM_DIMS[skill]
    lows = np.zeros(MAX_PARAM_DIM)
    highs = np.zeros(MAX_PARAM_DIM)
    mask = np.zeros(MAX_PARAM_DIM)
    bounds = [x_range, y_range, z_range, delta_range][:dim]
    for i, (lo, hi) in enumerate(bounds):
        lows[i], highs[i], mask[i] = lo, hi, 1.0
    lows.flags.writeable = False
    highs.flags.writeable = False
    mask.flags.writeable = False
    return ParamLayout(skill=skill, dim=dim, lows=lows, highs=highs, mask=mask)


def layouts_for(x_range=X_RANGE, y_range=Y_RANGE, z_range=Z_RANGE,
                delta_range=DELTA_RANGE) -> dict[SkillId, ParamLayout]:
    return {s: _make_layout(s, x_range, y_range, z_range, delta_range) for s in SkillId}


DEFAULT_LAYOUTS: dict[SkillId, ParamLayout] = layouts_for()


def ordered_skills(available: Iterable[SkillId]) -> tuple[SkillId, ...]:
    """Canonical ordering (by integer code) used for one-hot encoding."""
    return tuple(sorted(set(available), key=int))


def encode_one_hot(skill: SkillId, available: Sequence[SkillId]) -> np.ndarray:
    order = ordered_skills(available)
    if skill not in order:
        raise ValueError(f"skill {skill.name} not in available set {order}")
    vec = np.zeros(len(order))
    vec[order.index(skill)] = 1.0
    return vec


def squash_params(raw: np.ndarray, skill: SkillId,
                  layouts: dict[SkillId, ParamLayout] | None = None) -> SkillAction:
    """Map unbounded actor output onto the skill's bounded parameter box.

    ``raw`` may have length ``dim`` or ``MAX_PARAM_DIM``; extra slots are
    ignored. The affine map sends tanh(raw) in [-1, 1] to [low, high] per
    coordinate; masked-out slots are forced to zero.
    """
    layout = (layouts or DEFAULT_LAYOUTS)[skill]
    raw = np.asarray(raw, dtype=float).reshape(-1)
    if not np.all(np.isfinite(raw)):
        raise ValueError(f"non-finite raw parameters for {skill.name}: {raw}")
    padded = np.zeros(MAX_PARAM_DIM)
    n = min(raw.size, MAX_PARAM_DIM)
    padded[:n] = raw[:n]
    t = np.tanh(padded) * layout.mask
    world = layout.lows + 0.5 * (t + 1.0) * (layout.highs - layout.lows)
    world *= layout.mask
    return SkillAction(skill=skill, params_raw=t, params_world=world, mask=layout.mask.copy())


def unsquash_params(world: np.ndarray, skill: SkillId,
                    layouts: dict[SkillId, ParamLayout] | None = None) -> np.ndarray:
    """Inverse of :func:`squash_params` on the open interior of the bounds."""
    layout = (layouts or DEFAULT_LAYOUTS)[skill]
    world = np.asarray(world, dtype=float).reshape(-1)
    raw = np.zeros(MAX_PARAM_DIM)
    for i in range(layout.dim):
        span = layout.highs[i] - layout.lows[i]
        t = 2.0 * (world[i] - layout.lows[i]) / span - 1.0
        t = np.clip(t, -1.0 + 1e-15, 1.0 - 1e-15)
        raw[i] = np.arctanh(t)
    return raw


def release_action() -> SkillAction:
    """The parameterless gripper-release action."""
    return squash_params(np.zeros(MAX_PARAM_DIM), SkillId.RELEASE)


def skill_catalog_doc(layouts: dict[SkillId, ParamLayout] | None = None) -> list[dict]:
    """JSON-friendly catalog export consumed by the feedback console."""
    layouts = layouts or DEFAULT_LAYOUTS
    doc = []
    for skill in SkillId:
        layout = layouts[skill]
        doc.append({
            "id": int(skill),
            "name": SKILL_NAMES[skill],
            "dim": layout.dim,
            "bounds": [[float(layout.lows[i]), float(layout.highs[i])]
                       for i in range(layout.dim)],
        })
    return doc
