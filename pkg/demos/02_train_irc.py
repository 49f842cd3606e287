"""Train a small IRC model and compare it with the baselines.

This is a short run (one seed, a few dozen episodes) meant to show the moving
parts; the calibrated five-seed configuration lives in
``pandemic_marl/scenarios/outbreak_train.yaml`` and is what the acceptance
suite uses.

    python3 demos/02_train_irc.py [alpha]
"""

import sys

from pandemic_marl import outbreak_scenario
from pandemic_marl.evaluation import baseline_policies, compute_metrics, run_episode, type_wise
from pandemic_marl.learner import load_train_config, train

alpha = float(sys.argv[1]) if len(sys.argv) > 1 else 0.4
scenario = outbreak_scenario()
config = load_train_config().replace(alpha=alpha, seeds=(0,), episodes=30)


def progress(seed_result):
    print(f"seed {seed_result.seed}: best evaluation R_g {seed_result.best_eval_reward:.3f} "
          f"at episode {seed_result.best_episode} ({seed_result.seconds:.0f} s)")


result = train(config, scenario, progress=progress)
for rec in result.log[-3:]:
    print({k: rec[k] for k in ("episode", "global_reward", "eval_global_reward") if k in rec})

print()
rows = [(m, p, pol) for m, p, pol in baseline_policies(scenario=scenario)]
rows.append(("IRC", f"alpha={alpha:g}", result.policy()))
for model, param, policy in rows:
    traj = run_episode(policy, scenario)
    rep = compute_metrics(traj)
    print(f"{model:>9} {param:<22} R_g={rep.mean_global_reward:12.4g}  "
          f"H={rep.mean_hospitalized:9.0f}  p={rep.mean_action:.4f}  "
          f"type spread={type_wise(traj, scenario).action_spread:.3f}")
