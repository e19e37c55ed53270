"""
Plain SAC against DRESS-shaped SAC
==================================

Trains both agents on the wireless task with the same seed and prints the
smoothed environment return along the way. The default budget is short so
the script finishes in a few minutes; pass a step count to go longer, e.g.
``python3 demos/sparse_reward_training.py 20000``.
"""

import sys
import time

from dressrl.config import RunConfig
from dressrl.harness import run_training, smoothed_at, steps_to_reach

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 6000
base = RunConfig(total_steps=steps, latency_limit=0.02, beta=0.2, K=5, seed=0)

results = {}
for name, dress in (("SAC", False), ("DRESS", True)):
    t = time.perf_counter()
    results[name] = run_training(base.with_(dress_enabled=dress)).records
    print(f"{name}: {len(results[name])} episodes in {time.perf_counter() - t:.0f}s")

checkpoints = range(steps // 6, steps + 1, steps // 6)
print("step   " + "".join(f"{c:>9d}" for c in checkpoints))
for name, recs in results.items():
    print(f"{name:<7}" + "".join(f"{smoothed_at(recs, c):9.0f}" for c in checkpoints))

# the speedup measure: steps to 90% of the baseline's final level
level = 0.9 * smoothed_at(results["SAC"], steps)
print(f"steps to reach {level:.0f}:",
      {name: steps_to_reach(recs, level) for name, recs in results.items()})
