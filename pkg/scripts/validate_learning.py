"""Multi-seed learning validation for the acceptance configurations."""

import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")


def run_one(args):
    task, mode, seed = args
    from seedrl import train_loop as tl

    base = dict(task=task, feedback_mode=mode, seed=seed)
    if task == "reaching":
        cfg = tl.TrainConfig(max_decision_steps=2000, batch_size=128, hidden=(48, 48),
                             oracle_tau_ok=0.15, oracle_tau_ok_final=0.04,
                             oracle_tau_ok_anneal_steps=1500, start_steps=300,
                             auto_alpha_skill=True, alpha_skill=0.2,
                             alpha_skill_max=0.5, **base)
    else:
        steps = 20000
        cfg = tl.TrainConfig(max_decision_steps=steps, batch_size=128, hidden=(48, 48),
                             oracle_tau_ok=0.12, oracle_tau_ok_final=0.04,
                             oracle_tau_ok_anneal_steps=6000, start_steps=500,
                             auto_alpha_skill=True, alpha_skill=0.2,
                             alpha_skill_max=0.5,
                             early_stop_success=0.9 if mode == "oracle_script" else None,
                             **base)
    t0 = time.monotonic()
    m = tl.run_training(cfg)
    return (task, mode, seed, time.monotonic() - t0, m.decision_steps,
            m.eval_curve, m.successes, m.safety_violations)


def main():
    jobs = []
    which = sys.argv[1] if len(sys.argv) > 1 else "all"
    if which in ("all", "reaching"):
        jobs += [("reaching", "oracle_script", s) for s in range(5)]
    if which in ("all", "stacking"):
        jobs += [("stacking", "oracle_script", s) for s in range(5)]
    if which in ("all", "baselines"):
        jobs += [("stacking", "env_reward", s) for s in range(5)]
        jobs += [("stacking", "env_reward_aff", s) for s in range(5)]
    with ProcessPoolExecutor(max_workers=2) as pool:
        for task, mode, seed, dt, steps, curve, succ, viol in pool.map(run_one, jobs):
            best = max((r for _, r in curve), default=0.0)
            print(f"{task}/{mode} seed {seed}: {dt:.0f}s {steps} steps "
                  f"best={best} succ={succ} viol={viol}", flush=True)
            print(f"  curve: {curve}", flush=True)


if __name__ == "__main__":
    main()
