"""
The wireless latency task by hand
=================================

Walks one step of the multi-user edge-computing environment: received
power, SINR, throughput, latency, service rate, and the two-case reward.
Then compares how often a random and a fixed even-split policy land in the
zero-feedback case at the two latency limits used in the experiments.
"""

import numpy as np

from dressrl.wireless import (
    AllocationAction,
    EnvConfig,
    MECLatencyEnv,
    evaluate_allocation,
    random_policy_case1_fraction,
    reset,
)

cfg = EnvConfig()
state = reset(cfg, seed=0)
print("positions (0 = base station, 1 = cell edge):", np.round(state.positions, 3))
print("channel gains, Gamma(M=4, 1) draws:", np.round(state.gains, 2))

# split every resource evenly between the three users
even = AllocationAction(np.full(3, 1 / 3), np.full(3, 1 / 3), np.full(3, 1 / 3))
ev = evaluate_allocation(state, even, cfg)
for name in ("sinr", "throughputs", "latencies", "service_rates"):
    print(f"{name:>14}:", np.array2string(ev[name], precision=4))
print("reward", round(ev["reward"], 3), "case", ev["case"].value)

# a policy that gives nothing away gets nothing back
starve = AllocationAction(np.zeros(3), np.zeros(3), np.zeros(3))
print("zero allocation ->", evaluate_allocation(state, starve, cfg)["case"].value)


def even_split_case1(config, steps=5000, seed=0):
    env = MECLatencyEnv(config)
    env.reset(seed)
    hits = 0
    for _ in range(steps):
        _, _, done, info = env.step(np.ones(config.action_dim))
        hits += info["case1"]
        if done:
            seed += 1
            env.reset(seed)
    return hits / steps


# sparsity: random actions almost never satisfy every user at once
for lat in (0.02, 0.01):
    c = EnvConfig(latency_limit=lat)
    print(f"L_th={lat}: random Case-1 {random_policy_case1_fraction(c, 5000):.3f}, "
          f"even split Case-1 {even_split_case1(c):.3f}")
