"""End-to-end gated training: propose, query feedback, gate, store, update.

One trainer thread owns the environment, buffer and policy bundle. Every
decision step emits one metrics record; evaluations run on a fixed cadence
with deterministic actions and gating disabled. Runs with oracle feedback are
bit-reproducible: all randomness flows from the config seed and no wallclock
data enters the metrics stream.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import feedback as fb
from . import seed_agent as sa
from . import sim_tabletop as sim
from .diff_net import AdamState, optimizer_step
from .replay_buffer import ReplayBuffer, Transition
from .skill_space import SKILL_NAMES, SkillAction, squash_params

log = logging.getLogger("seedrl.train")

METRICS_SCHEMA_VERSION = 1

FEEDBACK_MODES = ("oracle_script", "oracle_q", "human", "env_reward", "env_reward_aff")
ENV_MODES = ("env_reward", "env_reward_aff")


class TrainingHalted(RuntimeError):
    """Raised when a non-finite loss or gradient stops the run."""


@dataclass
class TrainConfig:
    task: str = "stacking"
    feedback_mode: str = "oracle_script"
    learning_rate: float = 3e-3
    batch_size: int = 256
    gamma: float = 0.99
    gradient_steps: int = 5
    train_frequency: int = 1
    max_decision_steps: int = 20_000
    max_episodes: Optional[int] = None
    eval_every: int = 500
    eval_rollouts: int = 10
    gate_mode: Optional[str] = None     # always | off; None = mode default
    seed: int = 0
    hidden: tuple[int, ...] = (64, 64)
    alpha_skill: float = 0.05
    alpha_param: float = 0.05
    auto_alpha_skill: bool = False
    auto_alpha_param: bool = False
    alpha_lr: float = 3e-3
    alpha_skill_max: float = 5.0
    skill_entropy_ratio: float = 0.5
    include_affordance: bool = True
    bootstrap_feedback: bool = False
    buffer_capacity: int = 100_000
    warmup: Optional[int] = None        # None = one full batch
    start_steps: int = 0                # uniform-random proposals before this step
    balanced_sampling: Optional[bool] = None  # None = mode default
    bellman_target_tau: float = 0.005
    episode_horizon: Optional[int] = None     # None = task default
    oracle_tau_ok: float = fb.TAU_OK
    oracle_tau_ok_final: Optional[float] = None  # anneal target (None = constant)
    oracle_tau_ok_anneal_steps: int = 1
    q_alpha: float = 0.999
    q_alpha_increment: float = 1e-5
    human_timeout_s: float = 30.0
    early_stop_success: Optional[float] = None

    def __post_init__(self) -> None:
        if self.feedback_mode not in FEEDBACK_MODES:
            raise ValueError(f"unknown feedback mode {self.feedback_mode!r}")
        for name in ("batch_size", "gradient_steps", "train_frequency",
                     "max_decision_steps", "eval_every", "eval_rollouts"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not (0.0 <= self.gamma < 1.0):
            raise ValueError(f"gamma {self.gamma} out of [0, 1)")
        if self.gate_mode is None:
            self.gate_mode = "off" if self.feedback_mode in ENV_MODES else "always"
        if self.gate_mode not in ("always", "off"):
            raise ValueError(f"unknown gate mode {self.gate_mode!r}")
        if self.balanced_sampling is None:
            self.balanced_sampling = self.feedback_mode not in ENV_MODES
        if isinstance(self.hidden, list):
            self.hidden = tuple(self.hidden)

    @property
    def uses_bellman(self) -> bool:
        return self.feedback_mode in ENV_MODES or self.bootstrap_feedback

    def agent_config(self) -> sa.AgentConfig:
        return sa.AgentConfig(hidden=self.hidden, alpha_skill=self.alpha_skill,
                              alpha_param=self.alpha_param,
                              auto_alpha_skill=self.auto_alpha_skill,
                              auto_alpha_param=self.auto_alpha_param,
                              alpha_lr=self.alpha_lr,
                              alpha_skill_max=self.alpha_skill_max,
                              skill_entropy_ratio=self.skill_entropy_ratio,
                              include_affordance=self.include_affordance,
                              bootstrap_feedback=self.bootstrap_feedback)

    def to_doc(self) -> dict:
        doc = asdict(self)
        doc["hidden"] = list(self.hidden)
        return doc


@dataclass
class RunMetrics:
    decision_steps: int = 0
    executed_steps: int = 0
    vetoed_steps: int = 0
    successes: int = 0
    feedback_counts: dict = field(default_factory=lambda: {-1: 0, 0: 0, 1: 0})
    safety_violations: int = 0
    gradient_bursts: int = 0
    eval_curve: list = field(default_factory=list)
    wallclock: float = 0.0

    @property
    def violation_ratio(self) -> float:
        if self.decision_steps == 0:
            return 0.0
        return self.safety_violations / self.decision_steps


def record_safety(outcome: sim.StepOutcome, metrics: RunMetrics) -> None:
    """Count one decision step (executed or vetoed) and any violation it caused."""
    metrics.decision_steps += 1
    if outcome.executed:
        metrics.executed_steps += 1
    else:
        metrics.vetoed_steps += 1
    if outcome.safety_violation is not None:
        metrics.safety_violations += 1


def _mix_seed(run_seed: int, index: int, salt: int = 0) -> int:
    x = (run_seed * 6364136223846793005 + index * 1442695040888963407
         + salt * 2862933555777941757) % (2 ** 63)
    return int(x)


def evaluate(bundle: sa.PolicyBundle, task: sim.TaskSpec, n_rollouts: int = 10,
             seed: int = 0, horizon: Optional[int] = None,
             tol: sim.Tolerances = sim.DEFAULT_TOLERANCES) -> float:
    """Deterministic greedy rollouts, gating off, no learning."""
    policy = lambda state: sa.sample_action(bundle, sim.observe(state, task).values,
                                            mode="deterministic")
    return rollout_policy(policy, task, n_rollouts, seed, horizon, tol)


def rollout_policy(policy: Callable[[sim.WorldState], SkillAction], task: sim.TaskSpec,
                   n_rollouts: int, seed: int, horizon: Optional[int] = None,
                   tol: sim.Tolerances = sim.DEFAULT_TOLERANCES) -> float:
    episodes = rollout_episodes(policy, task, n_rollouts, seed, horizon, tol)
    return sum(1 for e in episodes if e["success"]) / n_rollouts


def rollout_episodes(policy: Callable[[sim.WorldState], SkillAction], task: sim.TaskSpec,
                     n_rollouts: int, seed: int, horizon: Optional[int] = None,
                     tol: sim.Tolerances = sim.DEFAULT_TOLERANCES) -> list[dict]:
    horizon = horizon or task.max_steps
    episodes = []
    for i in range(n_rollouts):
        state = sim.reset(task, _mix_seed(seed, i, salt=97), tol)
        success = False
        steps = 0
        for _ in range(horizon):
            outcome = sim.execute_skill(state, policy(state), task, tol=tol)
            state = outcome.next_state
            steps += 1
            if outcome.success:
                success = True
                break
        episodes.append({"success": success, "steps": steps})
    return episodes


def evaluate_episodes(bundle: sa.PolicyBundle, task: sim.TaskSpec, n_rollouts: int,
                      seed: int, horizon: Optional[int] = None,
                      tol: sim.Tolerances = sim.DEFAULT_TOLERANCES) -> list[dict]:
    policy = lambda state: sa.sample_action(bundle, sim.observe(state, task).values,
                                            mode="deterministic")
    return rollout_episodes(policy, task, n_rollouts, seed, horizon, tol)


class _Trainer:
    def __init__(self, cfg: TrainConfig, task: sim.TaskSpec,
                 sinks: Sequence[Callable[[dict], None]],
                 hub=None, oracle_bundle: Optional[sa.PolicyBundle] = None,
                 checkpoint_dir: Optional[Path] = None,
                 tol: sim.Tolerances = sim.DEFAULT_TOLERANCES):
        self.cfg = cfg
        self.task = task
        self.sinks = list(sinks)
        self.hub = hub
        self.tol = tol
        self.checkpoint_dir = Path(checkpoint_dir) if checkpoint_dir else None
        ss = np.random.SeedSequence(cfg.seed % (2 ** 63))
        init_ss, policy_ss, buffer_ss = ss.spawn(3)
        self.init_rng = np.random.default_rng(init_ss)
        self.policy_rng = np.random.default_rng(policy_ss)
        self.buffer_rng = np.random.default_rng(buffer_ss)
        self.agent_cfg = cfg.agent_config()
        self.bundle = sa.make_bundle(task, self.agent_cfg, self.init_rng)
        self.target_critic = self.bundle.critic.clone() if cfg.uses_bellman else None
        self.opt_critic = AdamState.for_params(self.bundle.critic.params, cfg.learning_rate)
        self.opt_skill = AdamState.for_params(self.bundle.skill_actor.params, cfg.learning_rate)
        self.opt_params = {s: AdamState.for_params(n.params, cfg.learning_rate)
                           for s, n in self.bundle.param_actors.items()}
        self.buffer = ReplayBuffer(cfg.buffer_capacity, task.obs_dim, self.bundle.n_skills)
        self.warmup = cfg.warmup if cfg.warmup is not None else cfg.batch_size
        self.metrics = RunMetrics()
        self.horizon = cfg.episode_horizon or task.max_steps
        self.q_cfg = None
        if cfg.feedback_mode == "oracle_q":
            if oracle_bundle is None:
                raise ValueError("oracle_q mode needs a trained oracle bundle")
            self.q_cfg = fb.OracleQConfig(oracle_bundle=oracle_bundle, alpha=cfg.q_alpha,
                                          alpha_increment=cfg.q_alpha_increment)
        if cfg.feedback_mode == "human" and hub is None:
            raise ValueError("human mode needs a gateway hub")
        self.last_report: Optional[sa.LossReport] = None

    # -- feedback -----------------------------------------------------------

    def _tau_ok(self, step_id: int) -> float:
        cfg = self.cfg
        if cfg.oracle_tau_ok_final is None:
            return cfg.oracle_tau_ok
        frac = min(1.0, step_id / max(1, cfg.oracle_tau_ok_anneal_steps))
        return cfg.oracle_tau_ok + frac * (cfg.oracle_tau_ok_final - cfg.oracle_tau_ok)

    def _get_feedback(self, step_id: int, state: sim.WorldState, action: SkillAction,
                      obs: np.ndarray) -> fb.FeedbackSignal:
        mode = self.cfg.feedback_mode
        if mode == "oracle_script":
            return fb.oracle_script_feedback(state, action, self.task, step_id,
                                             tau_ok=self._tau_ok(step_id), tol=self.tol)
        if mode == "oracle_q":
            return fb.oracle_q_feedback(obs, action, self.q_cfg, step_id)
        if mode == "human":
            from .gateway import project_overlay
            request = fb.FeedbackRequest(
                step_id=step_id, render=sim.render_doc(state, self.task),
                skill=action.skill,
                params_world=tuple(float(v) for v in action.params_world),
                overlay=project_overlay(action))
            return fb.human_feedback(request, self.hub, timeout_s=self.cfg.human_timeout_s)
        return fb.FeedbackSignal(step_id=step_id, value=0, source="env")

    # -- learning -----------------------------------------------------------

    def _sample_skill_indices(self, probs: np.ndarray) -> np.ndarray:
        cum = np.cumsum(probs, axis=1)
        draws = self.policy_rng.random((probs.shape[0], 1))
        return (draws > cum).sum(axis=1)

    def _uniform_action(self) -> SkillAction:
        """Uniform-random proposal: uniform skill, params uniform over bounds."""
        skills = self.bundle.skills
        skill = skills[int(self.policy_rng.integers(0, len(skills)))]
        t = self.policy_rng.uniform(-0.999, 0.999, size=4)
        return squash_params(np.arctanh(t), skill)

    def _one_gradient_step(self) -> sa.LossReport:
        cfg = self.cfg
        batch = (self.buffer.sample_balanced(cfg.batch_size, self.buffer_rng)
                 if cfg.balanced_sampling
                 else self.buffer.sample_uniform(cfg.batch_size, self.buffer_rng))
        if cfg.uses_bellman:
            rewards = None
            if cfg.bootstrap_feedback and cfg.feedback_mode not in ENV_MODES:
                rewards = batch.feedback.astype(float)
                if cfg.include_affordance:
                    rewards = rewards + batch.affordance
            c_loss, c_grad = sa.bellman_critic_loss(
                self.bundle, self.target_critic, batch, cfg.gamma, rng=self.policy_rng,
                use_affordance=(cfg.feedback_mode == "env_reward_aff"), rewards=rewards)
        else:
            c_loss, c_grad = sa.critic_loss(self.bundle, batch, cfg.include_affordance)
        optimizer_step(self.bundle.critic.params, c_grad, self.opt_critic)
        if self.target_critic is not None:
            sa.polyak_update(self.target_critic, self.bundle.critic, cfg.bellman_target_tau)
        s_loss, s_grad, s_entropy, probs = sa.skill_actor_loss(
            self.bundle, batch.obs, rng=self.policy_rng, return_probs=True)
        optimizer_step(self.bundle.skill_actor.params, s_grad, self.opt_skill)
        skill_idx = self._sample_skill_indices(probs)
        p_loss, p_grads, p_entropy = sa.param_actor_loss(self.bundle, batch.obs,
                                                         skill_idx, rng=self.policy_rng)
        for skill, grad in p_grads.items():
            optimizer_step(self.bundle.param_actors[skill].params, grad,
                           self.opt_params[skill])
        sa.tune_alphas(self.bundle, s_entropy, p_entropy, self.agent_cfg)
        report = sa.LossReport(critic_loss=c_loss, skill_actor_loss=s_loss,
                               param_actor_loss=p_loss, mean_entropy_skill=s_entropy,
                               mean_entropy_param=p_entropy)
        if not np.isfinite([c_loss, s_loss, p_loss]).all():
            raise TrainingHalted(f"non-finite loss at step {self.metrics.decision_steps}: "
                                 f"{report}")
        return report

    # -- plumbing -----------------------------------------------------------

    def _emit(self, record: dict) -> None:
        for sink in self.sinks:
            sink(record)

    def _checkpoint(self, tag: str) -> None:
        if self.checkpoint_dir is None:
            return
        opts = {"critic": self.opt_critic, "skill_actor": self.opt_skill}
        opts.update({f"param_actor_{s.name.lower()}": o for s, o in self.opt_params.items()})
        sa.save_bundle(self.checkpoint_dir, tag, self.bundle, self.task,
                       optimizers=opts, extra_meta={"config": self.cfg.to_doc(),
                                                    "decision_steps": self.metrics.decision_steps})

    def _poll_hub(self) -> None:
        if self.hub is not None:
            self.hub.wait_if_paused()

    def run(self) -> RunMetrics:
        cfg, task, metrics = self.cfg, self.task, self.metrics
        t_start = time.monotonic()
        step = 0
        episode = 0
        stop = False
        recent_evals: list[float] = []
        try:
            while step < cfg.max_decision_steps and not stop:
                if cfg.max_episodes is not None and episode >= cfg.max_episodes:
                    break
                state = sim.reset(task, _mix_seed(cfg.seed, episode), self.tol)
                for ep_t in range(self.horizon):
                    self._poll_hub()
                    obs = sim.observe(state, task)
                    if step < cfg.start_steps:
                        action = self._uniform_action()
                    else:
                        action = sa.sample_action(self.bundle, obs.values, "stochastic",
                                                  self.policy_rng)
                    signal = self._get_feedback(step, state, action, obs.values)
                    gated_out = cfg.gate_mode == "always" and signal.value != 1
                    pre_hash = state.state_hash()
                    if gated_out:
                        outcome = sim.vetoed_outcome(state, action, task, self.tol)
                    else:
                        outcome = sim.execute_skill(state, action, task, tol=self.tol)
                    record_safety(outcome, metrics)
                    metrics.feedback_counts[signal.value] += 1
                    if outcome.success:
                        metrics.successes += 1
                    next_obs = sim.observe(outcome.next_state, task)
                    self.buffer.push(Transition(
                        obs=obs.values, skill_one_hot=self.bundle.one_hot(action.skill),
                        params_padded=action.params_world, feedback=signal.value,
                        affordance=outcome.affordance_penalty,
                        env_reward=outcome.env_reward, next_obs=next_obs.values,
                        done=outcome.success, executed=outcome.executed))
                    self._emit({
                        "v": METRICS_SCHEMA_VERSION, "type": "step", "step": step,
                        "episode": episode, "t": ep_t,
                        "skill": SKILL_NAMES[action.skill], "H": signal.value,
                        "source": signal.source, "executed": outcome.executed,
                        "reward": outcome.env_reward,
                        "affordance": outcome.affordance_penalty,
                        "stage": outcome.next_state.task_stage,
                        "violation": (outcome.safety_violation.value
                                      if outcome.safety_violation else None),
                        "success": outcome.success,
                        "pre_hash": pre_hash,
                        "post_hash": outcome.next_state.state_hash(),
                    })
                    state = outcome.next_state
                    step += 1
                    if step % cfg.train_frequency == 0 and len(self.buffer) >= self.warmup:
                        for _ in range(cfg.gradient_steps):
                            self.last_report = self._one_gradient_step()
                        metrics.gradient_bursts += 1
                    if step % cfg.eval_every == 0:
                        rate = evaluate(self.bundle, task, cfg.eval_rollouts,
                                        seed=_mix_seed(cfg.seed, step, salt=13),
                                        horizon=self.horizon, tol=self.tol)
                        metrics.eval_curve.append((step, rate))
                        eval_rec = {"v": METRICS_SCHEMA_VERSION, "type": "eval",
                                    "step": step, "success_rate": rate,
                                    "rollouts": cfg.eval_rollouts}
                        if self.last_report is not None:
                            eval_rec["critic_loss"] = self.last_report.critic_loss
                            eval_rec["entropy_skill"] = self.last_report.mean_entropy_skill
                        self._emit(eval_rec)
                        self._checkpoint(f"step_{step:08d}")
                        if self.hub is not None:
                            self.hub.publish_stats(self.stats_doc())
                        recent_evals.append(rate)
                        if (cfg.early_stop_success is not None and len(recent_evals) >= 2
                                and min(recent_evals[-2:]) >= cfg.early_stop_success):
                            stop = True
                    if outcome.success or step >= cfg.max_decision_steps or stop:
                        break
                episode += 1
        except TrainingHalted:
            self._checkpoint("halt")
            raise
        self._checkpoint("final")
        metrics.wallclock = time.monotonic() - t_start
        return metrics

    def stats_doc(self) -> dict:
        m = self.metrics
        return {
            "decision_steps": m.decision_steps,
            "executed_steps": m.executed_steps,
            "vetoed_steps": m.vetoed_steps,
            "successes": m.successes,
            "feedback_counts": {str(k): v for k, v in m.feedback_counts.items()},
            "safety_violations": m.safety_violations,
            "violation_ratio": m.violation_ratio,
            "buffer": {"size": self.buffer.stats.size,
                       "positive": self.buffer.stats.positive_count},
            "eval_curve": m.eval_curve[-20:],
        }


def run_training(cfg: TrainConfig, sinks: Sequence[Callable[[dict], None]] = (),
                 hub=None, oracle_bundle: Optional[sa.PolicyBundle] = None,
                 checkpoint_dir: Optional[str | Path] = None,
                 tol: sim.Tolerances = sim.DEFAULT_TOLERANCES,
                 return_trainer: bool = False):
    """Run one training session; returns RunMetrics (and the trainer if asked)."""
    task = sim.get_task(cfg.task)
    trainer = _Trainer(cfg, task, sinks, hub=hub, oracle_bundle=oracle_bundle,
                       checkpoint_dir=checkpoint_dir, tol=tol)
    metrics = trainer.run()
    if return_trainer:
        return metrics, trainer
    return metrics
