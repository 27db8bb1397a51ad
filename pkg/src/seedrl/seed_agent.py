"""The skill-level learner: feedback critic, skill actor, parameter actors.

The critic regresses the trainer's evaluative signal for a proposed
(observation, skill, parameters) triple; the categorical skill actor and the
per-skill tanh-Gaussian parameter actors ascend it under maximum-entropy
regularization. A separate Bellman path trains the same critic head on sparse
environment rewards for the no-feedback baselines.

All losses return ``(value, flat gradients)`` computed by hand, so each can be
finite-difference checked and gradient isolation is structural: a loss only
ever touches its own network's parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import diff_net
from .diff_net import AdamState, Net, NetSpec
from .replay_buffer import Batch
from .sim_tabletop import TaskSpec
from .skill_space import (
    DEFAULT_LAYOUTS,
    MAX_PARAM_DIM,
    PARAM_DIMS,
    ParamLayout,
    SkillAction,
    SkillId,
    ordered_skills,
    squash_params,
)

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class AgentConfig:
    hidden: tuple[int, ...] = (64, 64)
    activation: str = "tanh"
    alpha_skill: float = 0.05
    alpha_param: float = 0.05
    auto_alpha_skill: bool = False
    auto_alpha_param: bool = False
    alpha_lr: float = 3e-3
    alpha_skill_max: float = 5.0
    # Auto-tuned skill temperature targets this fraction of the uniform
    # entropy log(K); it keeps every skill's probability bounded away from
    # zero, which the exact-expectation actor gradient needs to recover a
    # skill the critic later starts preferring.
    skill_entropy_ratio: float = 0.5
    include_affordance: bool = True   # fold the -0.1 shaping into critic targets
    bootstrap_feedback: bool = False  # optional bootstrapped-feedback variant


@dataclass
class PolicyBundle:
    """All trainable state for one task."""

    task_name: str
    obs_dim: int
    skills: tuple[SkillId, ...]
    critic: Net
    skill_actor: Net
    param_actors: dict[SkillId, Net]   # only skills with dim >= 1
    alpha_skill: float
    alpha_param: float
    layouts: dict[SkillId, ParamLayout] = field(default_factory=lambda: DEFAULT_LAYOUTS)

    @property
    def n_skills(self) -> int:
        return len(self.skills)

    def one_hot(self, skill: SkillId) -> np.ndarray:
        vec = np.zeros(self.n_skills)
        vec[self.skills.index(skill)] = 1.0
        return vec

    def clone(self) -> "PolicyBundle":
        return PolicyBundle(
            task_name=self.task_name, obs_dim=self.obs_dim, skills=self.skills,
            critic=self.critic.clone(), skill_actor=self.skill_actor.clone(),
            param_actors={s: n.clone() for s, n in self.param_actors.items()},
            alpha_skill=self.alpha_skill, alpha_param=self.alpha_param,
            layouts=self.layouts)


@dataclass(frozen=True)
class LossReport:
    critic_loss: float
    skill_actor_loss: float
    param_actor_loss: float
    mean_entropy_skill: float
    mean_entropy_param: float


def make_bundle(task: TaskSpec, cfg: AgentConfig, rng: np.random.Generator) -> PolicyBundle:
    skills = ordered_skills(task.available_skills)
    k = len(skills)
    critic_spec = NetSpec((task.obs_dim + k + MAX_PARAM_DIM, *cfg.hidden, 1),
                          cfg.activation, "linear")
    actor_spec = NetSpec((task.obs_dim, *cfg.hidden, k), cfg.activation,
                         "categorical_logits")
    param_actors = {}
    for s in skills:
        dim = PARAM_DIMS[s]
        if dim >= 1:
            spec = NetSpec((task.obs_dim, *cfg.hidden, 2 * dim), cfg.activation,
                           "gaussian_head")
            param_actors[s] = Net(spec, rng=rng)
    return PolicyBundle(task_name=task.name, obs_dim=task.obs_dim, skills=skills,
                        critic=Net(critic_spec, rng=rng),
                        skill_actor=Net(actor_spec, rng=rng),
                        param_actors=param_actors,
                        alpha_skill=cfg.alpha_skill, alpha_param=cfg.alpha_param)


# ---------------------------------------------------------------------------
# critic


def _critic_input(bundle: PolicyBundle, obs: np.ndarray, one_hot: np.ndarray,
                  params: np.ndarray) -> np.ndarray:
    return np.concatenate([obs, one_hot, params], axis=-1)


def critic_predict(bundle: PolicyBundle, obs: np.ndarray, skill_one_hot: np.ndarray,
                   params_padded: np.ndarray) -> float:
    x = _critic_input(bundle, np.asarray(obs, dtype=float),
                      np.asarray(skill_one_hot, dtype=float),
                      np.asarray(params_padded, dtype=float))
    return float(bundle.critic.forward(x)[0])


def critic_loss(bundle: PolicyBundle, batch: Batch,
                include_affordance: bool = True) -> tuple[float, np.ndarray]:
    """Mean squared error of predicted vs observed feedback; grads on the critic."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    target = batch.feedback.astype(float)
    if include_affordance:
        target = target + batch.affordance
    x = _critic_input(bundle, batch.obs, batch.skill_one_hot, batch.params_padded)
    pred, cache = bundle.critic.forward(x, with_cache=True)
    err = pred[:, 0] - target
    loss = float(np.mean(err * err))
    upstream = (2.0 / len(batch)) * err[:, None]
    grad, _ = bundle.critic.backward(cache, upstream)
    return loss, grad


# ---------------------------------------------------------------------------
# squashed-Gaussian machinery shared by both actor losses


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def _gauss_head_split(out: np.ndarray, dim: int) -> tuple[np.ndarray, np.ndarray]:
    return out[:, :dim], out[:, dim:]


def _squash(u: np.ndarray, layout: ParamLayout) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """tanh+affine squash of pre-activations: returns (world, dworld_du, log_dworld_du)."""
    d = layout.dim
    t = np.tanh(u)
    span = (layout.highs[:d] - layout.lows[:d])
    world = layout.lows[:d] + 0.5 * (t + 1.0) * span
    dworld_du = 0.5 * (1.0 - t * t) * span
    # log(1 - tanh(u)^2) = 2*(log 2 - u - softplus(-2u)), numerically stable
    log_d = np.log(0.5 * span) + 2.0 * (np.log(2.0) - u - _softplus(-2.0 * u))
    return world, dworld_du, log_d


def _sample_params(bundle: PolicyBundle, skill: SkillId, obs: np.ndarray,
                   eps: np.ndarray, with_cache: bool = False):
    """Reparameterized squashed sample for one skill over a batch of states.

    Returns (world (B,d), log_prob (B,), aux) where aux carries everything the
    backward passes need: the head cache, eps, sigma, tanh terms.
    """
    net = bundle.param_actors[skill]
    layout = bundle.layouts[skill]
    d = layout.dim
    out, cache = net.forward(obs, with_cache=True)
    mu, log_std = _gauss_head_split(out, d)
    sigma = np.exp(log_std)
    u = mu + sigma * eps[:, :d]
    world, dworld_du, log_d = _squash(u, layout)
    log_prob = np.sum(-0.5 * eps[:, :d] ** 2 - log_std - 0.5 * _LOG_2PI - log_d, axis=1)
    aux = {"cache": cache, "eps": eps[:, :d], "sigma": sigma,
           "tanh_u": np.tanh(u), "dworld_du": dworld_du, "net": net, "dim": d}
    return world, log_prob, aux


def _param_slice_grad(bundle: PolicyBundle, grad_input: np.ndarray, dim: int) -> np.ndarray:
    """Critic-input gradient restricted to the first ``dim`` parameter slots."""
    start = bundle.obs_dim + bundle.n_skills
    return grad_input[:, start:start + dim]


def _draw_noise(skills: tuple[SkillId, ...], b: int,
                rng: Optional[np.random.Generator],
                noise: Optional[dict]) -> dict[SkillId, np.ndarray]:
    if noise is not None:
        return noise
    if rng is None:
        raise ValueError("need an rng or explicit noise")
    return {s: rng.standard_normal((b, MAX_PARAM_DIM)) for s in skills}


# ---------------------------------------------------------------------------
# actor losses


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def skill_actor_loss(bundle: PolicyBundle, obs: np.ndarray,
                     rng: Optional[np.random.Generator] = None,
                     noise: Optional[dict] = None,
                     return_probs: bool = False):
    """Expected-feedback-with-entropy objective for the categorical skill head.

    The expectation over skills is computed exactly (closed-form sum over the
    softmax); each skill's parameters enter through one reparameterized sample
    that is treated as a constant here. Gradients land only on the skill
    actor.
    """
    obs = np.atleast_2d(obs)
    b = obs.shape[0]
    k = bundle.n_skills
    noise = _draw_noise(bundle.skills, b, rng, noise)
    logits, cache = bundle.skill_actor.forward(obs, with_cache=True)
    log_p = _log_softmax(logits)
    p = np.exp(log_p)
    # One critic pass over all (state, skill) pairs: rows grouped by skill.
    big_x = np.zeros((k * b, bundle.obs_dim + k + MAX_PARAM_DIM))
    for idx, skill in enumerate(bundle.skills):
        rows = slice(idx * b, (idx + 1) * b)
        big_x[rows, :bundle.obs_dim] = obs
        big_x[rows, bundle.obs_dim + idx] = 1.0
        if skill in bundle.param_actors:
            world, _, _ = _sample_params(bundle, skill, obs, noise[skill])
            d = bundle.layouts[skill].dim
            big_x[rows, bundle.obs_dim + k:bundle.obs_dim + k + d] = world
    h_hat = bundle.critic.forward(big_x)[:, 0].reshape(k, b).T
    c = bundle.alpha_skill * log_p - h_hat
    loss = float(np.mean(np.sum(p * c, axis=1)))
    # dL/dlogits = p * (c - sum(p*c)); the entropy term's own derivative sums to zero.
    c_bar = np.sum(p * c, axis=1, keepdims=True)
    upstream = p * (c - c_bar) / b
    grad, _ = bundle.skill_actor.backward(cache, upstream)
    entropy = float(np.mean(-np.sum(p * log_p, axis=1)))
    if return_probs:
        return loss, grad, entropy, p
    return loss, grad, entropy


def param_actor_loss(bundle: PolicyBundle, obs: np.ndarray, skill_indices: np.ndarray,
                     rng: Optional[np.random.Generator] = None,
                     noise: Optional[dict] = None):
    """Reparameterized entropy-regularized objective for the parameter heads.

    Each batch row updates the actor of its sampled skill; rows whose skill has
    no parameters are skipped. The critic is gradient-stopped but its input
    gradient flows through the squashed sample into mu and log-std.

    Returns (loss, {skill: flat grad}, mean_entropy_estimate).
    """
    obs = np.atleast_2d(obs)
    b = obs.shape[0]
    k = bundle.n_skills
    skill_indices = np.asarray(skill_indices)
    noise = _draw_noise(bundle.skills, b, rng, noise)
    # Sample every row's parameters, then push all rows through the critic in
    # one pass; the per-skill backward passes reuse sliced input gradients.
    per_skill = []
    big_x = np.zeros((0, bundle.obs_dim + k + MAX_PARAM_DIM))
    chunks = []
    for idx, skill in enumerate(bundle.skills):
        if skill not in bundle.param_actors:
            continue
        rows = np.nonzero(skill_indices == idx)[0]
        if rows.size == 0:
            continue
        sub_obs = obs[rows]
        world, log_prob, aux = _sample_params(bundle, skill, sub_obs, noise[skill][rows])
        d = aux["dim"]
        x = np.zeros((rows.size, bundle.obs_dim + k + MAX_PARAM_DIM))
        x[:, :bundle.obs_dim] = sub_obs
        x[:, bundle.obs_dim + idx] = 1.0
        x[:, bundle.obs_dim + k:bundle.obs_dim + k + d] = world
        chunks.append(x)
        per_skill.append((skill, rows.size, log_prob, aux))
    if not per_skill:
        return 0.0, {}, 0.0
    big_x = np.concatenate(chunks, axis=0)
    pred, critic_cache = bundle.critic.forward(big_x, with_cache=True)
    h_hat = pred[:, 0]
    # dH/dx for every row at once, with the critic's own parameters frozen.
    _, grad_input = bundle.critic.backward(critic_cache, np.ones((big_x.shape[0], 1)))
    grads: dict[SkillId, np.ndarray] = {}
    total = 0.0
    entropy_sum = 0.0
    offset = 0
    for skill, n_rows, log_prob, aux in per_skill:
        d = aux["dim"]
        rows = slice(offset, offset + n_rows)
        offset += n_rows
        total += float(np.sum(bundle.alpha_param * log_prob - h_hat[rows]))
        entropy_sum += float(np.sum(-log_prob))
        g_x = -_param_slice_grad(bundle, grad_input[rows], d)
        # d(alpha*logp)/du = 2*alpha*tanh(u); d(-H)/du = g_x * dworld_du
        g_u = bundle.alpha_param * 2.0 * aux["tanh_u"] + g_x * aux["dworld_du"]
        g_log_std = g_u * aux["sigma"] * aux["eps"] - bundle.alpha_param
        upstream = np.concatenate([g_u, g_log_std], axis=1) / b
        grad, _ = aux["net"].backward(aux["cache"], upstream)
        grads[skill] = grads.get(skill, 0) + grad
    loss = total / b
    n_param_rows = offset
    entropy = entropy_sum / n_param_rows if n_param_rows else 0.0
    return loss, grads, entropy


def bellman_critic_loss(bundle: PolicyBundle, target_critic: Net, batch: Batch,
                        gamma: float, rng: Optional[np.random.Generator] = None,
                        noise: Optional[dict] = None,
                        use_affordance: bool = False,
                        rewards: Optional[np.ndarray] = None):
    """Soft one-step TD regression toward the target critic; grads on the critic.

    The next-state value takes the exact expectation over skills and one
    parameter sample per skill; entropy temperatures discount both heads.
    ``rewards`` overrides the batch's environment reward (the bootstrapped
    feedback variant passes the feedback signal here).
    """
    if not (0.0 <= gamma < 1.0):
        raise ValueError(f"gamma {gamma} out of [0, 1)")
    if len(batch) == 0:
        raise ValueError("empty batch")
    b = len(batch)
    noise = _draw_noise(bundle.skills, b, rng, noise)
    if rewards is None:
        rewards = batch.env_reward.astype(float)
        if use_affordance:
            rewards = rewards + batch.affordance
    k = bundle.n_skills
    logits = bundle.skill_actor.forward(batch.next_obs)
    log_p = _log_softmax(logits)
    p = np.exp(log_p)
    big_x = np.zeros((k * b, bundle.obs_dim + k + MAX_PARAM_DIM))
    log_probs = np.zeros((k, b))
    for idx, skill in enumerate(bundle.skills):
        rows = slice(idx * b, (idx + 1) * b)
        big_x[rows, :bundle.obs_dim] = batch.next_obs
        big_x[rows, bundle.obs_dim + idx] = 1.0
        if skill in bundle.param_actors:
            world, log_prob, _ = _sample_params(bundle, skill, batch.next_obs, noise[skill])
            d = bundle.layouts[skill].dim
            big_x[rows, bundle.obs_dim + k:bundle.obs_dim + k + d] = world
            log_probs[idx] = log_prob
    q = target_critic.forward(big_x)[:, 0].reshape(k, b)
    v_next = np.sum(p.T * (q - bundle.alpha_skill * log_p.T
                           - bundle.alpha_param * log_probs), axis=0)
    target = rewards + gamma * (1.0 - batch.done.astype(float)) * v_next
    x = _critic_input(bundle, batch.obs, batch.skill_one_hot, batch.params_padded)
    pred, cache = bundle.critic.forward(x, with_cache=True)
    err = pred[:, 0] - target
    loss = float(np.mean(err * err))
    grad, _ = bundle.critic.backward(cache, (2.0 / b) * err[:, None])
    return loss, grad


def polyak_update(target: Net, source: Net, tau: float) -> None:
    target.params *= (1.0 - tau)
    target.params += tau * source.params


# ---------------------------------------------------------------------------
# action sampling


def sample_action(bundle: PolicyBundle, obs: np.ndarray, mode: str = "stochastic",
                  rng: Optional[np.random.Generator] = None) -> SkillAction:
    if mode not in ("stochastic", "deterministic"):
        raise ValueError(f"unknown mode {mode!r}")
    obs = np.asarray(obs, dtype=float).reshape(1, -1)
    logits = bundle.skill_actor.forward(obs)[0]
    if mode == "deterministic":
        idx = int(np.argmax(logits))
    else:
        if rng is None:
            raise ValueError("stochastic sampling needs an rng")
        shifted = logits - logits.max()
        p = np.exp(shifted) / np.exp(shifted).sum()
        idx = int(rng.choice(len(p), p=p))
    skill = bundle.skills[idx]
    if skill not in bundle.param_actors:
        return squash_params(np.zeros(MAX_PARAM_DIM), skill, bundle.layouts)
    net = bundle.param_actors[skill]
    d = bundle.layouts[skill].dim
    out = net.forward(obs)[0]
    mu, log_std = out[:d], out[d:]
    if mode == "deterministic":
        u = mu
    else:
        u = mu + np.exp(log_std) * rng.standard_normal(d)
    raw = np.zeros(MAX_PARAM_DIM)
    raw[:d] = u
    return squash_params(raw, skill, bundle.layouts)


def skill_entropy(bundle: PolicyBundle, obs: np.ndarray) -> float:
    logits = np.atleast_2d(bundle.skill_actor.forward(np.atleast_2d(obs)))
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_p = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return float(np.mean(-np.sum(np.exp(log_p) * log_p, axis=1)))


def tune_alphas(bundle: PolicyBundle, entropy_skill: float, entropy_param: float,
                cfg: AgentConfig) -> None:
    """Nudge temperatures toward the configured entropy targets (optional).

    Temperatures grow while entropy sits below target and shrink above it;
    both are clamped to a sane range so a long streak cannot blow them up.
    """
    if cfg.auto_alpha_skill:
        target_skill = cfg.skill_entropy_ratio * np.log(bundle.n_skills)
        bundle.alpha_skill = float(np.clip(np.exp(
            np.log(bundle.alpha_skill) + cfg.alpha_lr * (target_skill - entropy_skill)),
            1e-3, cfg.alpha_skill_max))
    if cfg.auto_alpha_param:
        mean_dim = np.mean([bundle.layouts[s].dim for s in bundle.param_actors]) \
            if bundle.param_actors else 1.0
        bundle.alpha_param = float(np.clip(np.exp(
            np.log(bundle.alpha_param) + cfg.alpha_lr * (-float(mean_dim) - entropy_param)),
            1e-3, 5.0))


# ---------------------------------------------------------------------------
# persistence


def obs_layout_hash(task: TaskSpec) -> str:
    from .sim_tabletop import observe, reset
    layout = observe(reset(task, 0), task).layout
    doc = {"obs_dim": task.obs_dim, "layout": [[n, a, b] for n, a, b in layout]}
    return diff_net.config_hash(doc)


def _net_map(bundle: PolicyBundle) -> dict[str, Net]:
    nets = {"critic": bundle.critic, "skill_actor": bundle.skill_actor}
    for s, net in bundle.param_actors.items():
        nets[f"param_actor_{s.name.lower()}"] = net
    return nets


def save_bundle(directory: str | Path, name: str, bundle: PolicyBundle, task: TaskSpec,
                optimizers: Optional[dict[str, AdamState]] = None,
                extra_meta: Optional[dict] = None) -> Path:
    meta = {
        "task": bundle.task_name,
        "skills": [int(s) for s in bundle.skills],
        "obs_dim": bundle.obs_dim,
        "obs_layout_hash": obs_layout_hash(task),
        "alpha_skill": bundle.alpha_skill,
        "alpha_param": bundle.alpha_param,
    }
    if extra_meta:
        meta.update(extra_meta)
    return diff_net.save_checkpoint(directory, name, _net_map(bundle),
                                    optimizers=optimizers, meta=meta)


class BundleMismatchError(ValueError):
    """Checkpoint does not belong to the requested task."""


def load_bundle(manifest_path: str | Path, task: TaskSpec) -> PolicyBundle:
    nets, _, meta = diff_net.load_checkpoint(manifest_path)
    if meta.get("task") != task.name:
        raise BundleMismatchError(
            f"checkpoint is for task {meta.get('task')!r}, not {task.name!r}")
    if meta.get("obs_layout_hash") != obs_layout_hash(task):
        raise BundleMismatchError("observation layout hash mismatch")
    skills = tuple(SkillId(s) for s in meta["skills"])
    param_actors = {}
    for s in skills:
        key = f"param_actor_{s.name.lower()}"
        if key in nets:
            param_actors[s] = nets[key]
    return PolicyBundle(task_name=meta["task"], obs_dim=int(meta["obs_dim"]),
                        skills=skills, critic=nets["critic"],
                        skill_actor=nets["skill_actor"], param_actors=param_actors,
                        alpha_skill=float(meta["alpha_skill"]),
                        alpha_param=float(meta["alpha_param"]))
