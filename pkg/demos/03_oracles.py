"""Check the vectorised core against slow, loop-based references.

Each suite draws random instances, runs both implementations and reports the
worst relative disagreement.  The same suites back ``pandemic-marl
oracle-check``.

    python3 demos/03_oracles.py
"""

import numpy as np

from pandemic_marl import epidemic, oracles

rng = np.random.default_rng(0)
states, demand, action, rates = oracles.random_instance(rng, 3)
print("one random 3-region instance (S, I, H, R per row):")
print(np.array2string(states, precision=1, suppress_small=True))
fast = epidemic.step(states, demand, action, rates)
slow = np.array(oracles.reference_step(
    states.tolist(), demand.tolist(), action.tolist(),
    *(np.broadcast_to(v, 3).tolist() for v in (rates.beta_stay, rates.beta_move,
                                                 rates.gamma, rates.theta))))
print("after one step, vectorised minus loop reference:")
print(np.array2string(fast - slow, precision=2))
print()

for result in oracles.run_all():
    err = result["max_rel_error"]
    err = max(err.values()) if isinstance(err, dict) else err
    print(f"{result['name']:>13}: {'ok  ' if result['passed'] else 'FAIL'} "
          f"worst relative error {err:.1e} ({result['seconds']:.2f} s)")
