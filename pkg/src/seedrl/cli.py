"""Operator entry points: train, eval, oracle-check, replay."""

from __future__ import annotations

import json
import subprocess
import sys
import threading
from pathlib import Path

import click
import tomli

from . import __version__
from . import feedback as fb
from . import seed_agent as sa
from . import sim_tabletop as sim
from . import train_loop as tl

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_HALT = 3

FEEDBACK_FLAGS = {
    "oracle": "oracle_script",
    "oracle-q": "oracle_q",
    "human": "human",
    "env": "env_reward",
    "env-aff": "env_reward_aff",
}

TASK_CHOICES = ["reaching", "stacking", "sweeping", "collecting-toy", "cooking-hotdog"]


def _build_id() -> str:
    try:
        rev = subprocess.run(["git", "rev-parse", "--short", "HEAD"],
                             capture_output=True, text=True, timeout=5)
        git = rev.stdout.strip() if rev.returncode == 0 else "unknown"
    except (OSError, subprocess.TimeoutExpired):
        git = "unknown"
    return f"seedrl-{__version__}+{git}"


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path, "rb") as fh:
        return tomli.load(fh)


class _JsonlSink:
    def __init__(self, path: Path):
        self._fh = path.open("w")

    def __call__(self, record: dict) -> None:
        self._fh.write(json.dumps(record, sort_keys=True) + "\n")

    def close(self) -> None:
        self._fh.flush()
        self._fh.close()


@click.group()
@click.version_option(__version__)
def main() -> None:
    """Skill-based RL from evaluative feedback on a kinematic tabletop."""


@main.command("train")
@click.option("--task", type=click.Choice(TASK_CHOICES), default=None)
@click.option("--feedback", type=click.Choice(sorted(FEEDBACK_FLAGS)), default=None)
@click.option("--steps", type=int, default=None, help="decision-step budget")
@click.option("--seed", type=int, default=None)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--serve", "serve_addr", default=None,
              help="host:port for the gateway (required for human feedback)")
@click.option("--out", "out_dir", type=click.Path(), default=None)
@click.option("--oracle-ckpt", type=click.Path(exists=True), default=None,
              help="trained checkpoint backing the Q-threshold oracle")
@click.option("--batch-size", type=int, default=None)
@click.option("--gradient-steps", type=int, default=None)
@click.option("--train-frequency", type=int, default=None)
@click.option("--learning-rate", type=float, default=None)
@click.option("--eval-every", type=int, default=None)
@click.option("--eval-rollouts", type=int, default=None)
@click.option("--gate", type=click.Choice(["always", "off"]), default=None)
@click.option("--dump-buffer", is_flag=True, default=False)
def cmd_train(task, feedback, steps, seed, config_path, serve_addr, out_dir,
              oracle_ckpt, batch_size, gradient_steps, train_frequency,
              learning_rate, eval_every, eval_rollouts, gate, dump_buffer) -> None:
    """Run one training session (flags > config file > defaults)."""
    overrides = {
        "task": task.replace("-", "_") if task else None,
        "feedback_mode": FEEDBACK_FLAGS[feedback] if feedback else None,
        "max_decision_steps": steps,
        "seed": seed,
        "batch_size": batch_size,
        "gradient_steps": gradient_steps,
        "train_frequency": train_frequency,
        "learning_rate": learning_rate,
        "eval_every": eval_every,
        "eval_rollouts": eval_rollouts,
        "gate_mode": gate,
    }
    try:
        merged = _load_config_file(config_path)
        merged.update({k: v for k, v in overrides.items() if v is not None})
        cfg = tl.TrainConfig(**merged)
    except (TypeError, ValueError, tomli.TOMLDecodeError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    if cfg.feedback_mode == "human" and serve_addr is None:
        click.echo("config error: human feedback needs --serve HOST:PORT", err=True)
        sys.exit(EXIT_CONFIG)
    oracle_bundle = None
    if cfg.feedback_mode == "oracle_q":
        if oracle_ckpt is None:
            click.echo("config error: oracle-q feedback needs --oracle-ckpt", err=True)
            sys.exit(EXIT_CONFIG)
        try:
            oracle_bundle = sa.load_bundle(oracle_ckpt, sim.get_task(cfg.task))
        except (sa.BundleMismatchError, OSError, ValueError) as exc:
            click.echo(f"config error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)

    run_dir = Path(out_dir) if out_dir else Path("runs") / f"{cfg.task}-{cfg.feedback_mode}-s{cfg.seed}"
    run_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "build": _build_id(),
        "seed": cfg.seed,
        "config": cfg.to_doc(),
        "layout": {
            "metrics": "metrics.jsonl",
            "checkpoints": "checkpoints/",
            "buffer": "buffer.jsonl" if dump_buffer else None,
            "summary": "summary.json",
        },
    }
    (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))

    hub = None
    if cfg.feedback_mode == "human":
        from .gateway import GatewayHub, serve as gateway_serve
        hub = GatewayHub(require_train_client=True)
        static_dir = Path(__file__).resolve().parents[2] / "frontend" / "dist"
        server = threading.Thread(target=gateway_serve,
                                  args=(serve_addr, hub),
                                  kwargs={"static_dir": static_dir if static_dir.is_dir() else None},
                                  daemon=True)
        server.start()
        click.echo(f"gateway listening on {serve_addr}; waiting for the console...")

    sink = _JsonlSink(run_dir / "metrics.jsonl")
    try:
        result = tl.run_training(cfg, sinks=[sink], hub=hub,
                                 oracle_bundle=oracle_bundle,
                                 checkpoint_dir=run_dir / "checkpoints",
                                 return_trainer=True)
        metrics, trainer = result
    except tl.TrainingHalted as exc:
        sink.close()
        click.echo(f"training halted: {exc}", err=True)
        sys.exit(EXIT_HALT)
    sink.close()
    if dump_buffer:
        trainer.buffer.dump_jsonl(run_dir / "buffer.jsonl")
    summary = trainer.stats_doc()
    summary["wallclock_s"] = round(metrics.wallclock, 3)
    summary["gradient_bursts"] = metrics.gradient_bursts
    (run_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    final_rate = metrics.eval_curve[-1][1] if metrics.eval_curve else None
    click.echo(f"done: {metrics.decision_steps} decision steps, "
               f"{metrics.successes} successes, "
               f"violation ratio {metrics.violation_ratio:.4f}, "
               f"final eval {final_rate}")
    sys.exit(EXIT_OK)


@main.command("eval")
@click.option("--ckpt", "ckpt_path", type=click.Path(exists=True), required=True)
@click.option("--task", type=click.Choice(TASK_CHOICES), required=True)
@click.option("--rollouts", type=int, default=10, show_default=True)
@click.option("--seed", type=int, default=0)
@click.option("--format", "fmt", type=click.Choice(["text", "json"]), default="text")
def cmd_eval(ckpt_path, task, rollouts, seed, fmt) -> None:
    """Greedy rollouts from a checkpoint; prints the success rate."""
    task_spec = sim.get_task(task)
    try:
        bundle = sa.load_bundle(ckpt_path, task_spec)
    except (sa.BundleMismatchError, ValueError, KeyError) as exc:
        click.echo(f"checkpoint mismatch: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    episodes = tl.evaluate_episodes(bundle, task_spec, rollouts, seed)
    rate = sum(1 for e in episodes if e["success"]) / len(episodes)
    if fmt == "json":
        click.echo(json.dumps({"task": task_spec.name, "rollouts": rollouts,
                               "success_rate": rate, "episodes": episodes},
                              sort_keys=True))
    else:
        for i, e in enumerate(episodes):
            click.echo(f"rollout {i}: {'success' if e['success'] else 'failure'} "
                       f"in {e['steps']} steps")
        click.echo(f"success_rate {rate:.2f} over {rollouts} rollouts")
    sys.exit(EXIT_OK)


@main.command("oracle-check")
@click.option("--task", type=click.Choice(TASK_CHOICES + ["all"]), default="all")
@click.option("--seeds", type=int, default=20, show_default=True)
def cmd_oracle_check(task, seeds) -> None:
    """Roll the stage script's own solution; it must earn +1 at every step."""
    names = [t.replace("-", "_") for t in TASK_CHOICES] if task == "all" \
        else [task.replace("-", "_")]
    failures = 0
    for name in names:
        task_spec = sim.get_task(name)
        lengths = []
        for i in range(seeds):
            ok, steps, detail = _check_one(task_spec, seed=1000 + i)
            lengths.append(steps)
            click.echo(f"{name} seed {1000 + i}: {'pass' if ok else 'FAIL ' + detail}"
                       f" ({steps} steps)")
            failures += 0 if ok else 1
        click.echo(f"{name}: mean solution length "
                   f"{sum(lengths) / len(lengths):.2f} over {seeds} seeds")
    if failures:
        click.echo(f"{failures} failures", err=True)
        sys.exit(EXIT_FAILURE)
    sys.exit(EXIT_OK)


def _check_one(task_spec: sim.TaskSpec, seed: int) -> tuple[bool, int, str]:
    state = sim.reset(task_spec, seed)
    for step in range(task_spec.max_steps):
        action = fb.scripted_action(state, task_spec)
        signal = fb.oracle_script_feedback(state, action, task_spec, step_id=step)
        if signal.value != 1:
            return False, step + 1, (f"oracle rejected its own action at stage "
                                     f"{state.task_stage} ({action.skill.name})")
        outcome = sim.execute_skill(state, action, task_spec)
        state = outcome.next_state
        if outcome.success:
            return True, step + 1, ""
    return False, task_spec.max_steps, f"no success within horizon (stage {state.task_stage})"


@main.command("replay")
@click.option("--metrics", "metrics_path", type=click.Path(exists=True), default=None)
@click.option("--buffer", "buffer_path", type=click.Path(exists=True), default=None)
def cmd_replay(metrics_path, buffer_path) -> None:
    """Summarize a stored run from its metrics/buffer JSONL files."""
    if metrics_path is None and buffer_path is None:
        click.echo("need --metrics and/or --buffer", err=True)
        sys.exit(EXIT_CONFIG)
    if metrics_path:
        steps = evals = successes = violations = 0
        feedback_counts = {-1: 0, 0: 0, 1: 0}
        last_eval = None
        with open(metrics_path) as fh:
            for line in fh:
                rec = json.loads(line)
                if rec.get("type") == "step":
                    steps += 1
                    successes += 1 if rec.get("success") else 0
                    violations += 1 if rec.get("violation") else 0
                    if rec.get("H") in (-1, 0, 1):
                        feedback_counts[rec["H"]] += 1
                elif rec.get("type") == "eval":
                    evals += 1
                    last_eval = rec.get("success_rate")
        click.echo(f"steps {steps}, successes {successes}, violations {violations} "
                   f"(ratio {violations / steps if steps else 0:.4f})")
        click.echo(f"feedback counts {feedback_counts}, evals {evals}, "
                   f"last eval success {last_eval}")
    if buffer_path:
        total = executed = positive = 0
        with open(buffer_path) as fh:
            for line in fh:
                rec = json.loads(line)
                total += 1
                executed += 1 if rec.get("executed") else 0
                positive += 1 if rec.get("feedback") == 1 else 0
        click.echo(f"buffer: {total} transitions, {executed} executed, {positive} positive")
    sys.exit(EXIT_OK)


if __name__ == "__main__":
    main()
