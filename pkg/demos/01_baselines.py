"""Roll out the two expert baselines on the calibrated outbreak scenario.

The outbreak starts in an exempt source region and spreads along the
mobility routes.  Fixed halves every route for the whole episode; Threshold
closes a region's inbound routes while its hospital load is above a trigger,
until its accumulated lockdown penalty forces it to reopen.

    python3 demos/01_baselines.py
"""

import numpy as np

from pandemic_marl import FixedPolicy, ThresholdPolicy, outbreak_scenario
from pandemic_marl.evaluation import compute_metrics, run_episode, type_wise

scenario = outbreak_scenario()
print(f"{scenario.n_regions} regions, {scenario.horizon} steps, "
      f"decisions every {scenario.action_period} steps\n")

for name, policy in [("all open", FixedPolicy(1.0)),
                     ("fixed 0.5", FixedPolicy(0.5)),
                     ("threshold", ThresholdPolicy(1.0, 168.0, scenario))]:
    traj = run_episode(policy, scenario)
    rep = compute_metrics(traj)
    tw = type_wise(traj, scenario)
    print(f"{name:>10}: R_g={rep.mean_global_reward:12.4g}  H={rep.mean_hospitalized:9.0f}  "
          f"peak H={rep.max_hospitalized:9.0f}  p={rep.mean_action:.4f}")
    print(" " * 12 + "inbound share by type (rows H+/H-, cols L+/L-):",
          np.array2string(tw.mean_action, precision=3).replace("\n", ""))

# Hospital curves: when each policy peaks and how high.
print()
for name, policy in [("all open", FixedPolicy(1.0)), ("threshold", ThresholdPolicy(1.0, 168.0, scenario))]:
    h = compute_metrics(run_episode(policy, scenario)).series["total_hospitalized"]
    print(f"{name:>10}: peak at step {int(np.argmax(h))}, "
          f"{h[::60].round(0).astype(int).tolist()} (every 60 steps)")
