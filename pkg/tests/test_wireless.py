import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from dressrl.replay import replay_trace
from dressrl.wireless import (
    LATENCY_SENTINEL,
    AllocationAction,
    Case,
    EnvConfig,
    MECLatencyEnv,
    NetworkState,
    TraceWriter,
    apply_displacement,
    compute_latency,
    compute_reward,
    compute_sinr,
    compute_throughput,
    decode_observation,
    encode_observation,
    evaluate_allocation,
    project_action,
    random_policy_case1_fraction,
    reset,
    sample_channel_gain,
    service_rate,
    step,
    update_positions,
)

CFG = EnvConfig()


def state_of(cfg, **kw):
    n = cfg.n_users
    base = dict(positions=np.full(n, 0.2), demands=np.full(n, 0.02), latency_req=np.full(n, 0.05),
                throughput_req=np.full(n, 0.5), patience=np.full(n, 10), gains=np.full(n, 4.0),
                active=np.ones(n, dtype=bool), t=0)
    base.update({k: np.asarray(v) if k != "t" else v for k, v in kw.items()})
    return NetworkState(**base)


def test_config_rejects_invalid():
    with pytest.raises(ValueError):
        EnvConfig(B_max=0)
    with pytest.raises(ValueError):
        EnvConfig(M_antennas=0)
    with pytest.raises(ValueError):
        EnvConfig(delta_x_max=1.5)
    with pytest.raises(ValueError):
        EnvConfig(episode_length=0)


def test_config_dict_round_trip():
    cfg = replace(CFG, latency_limit=0.01, demand_range=(0.1, 0.2))
    assert EnvConfig.from_dict(cfg.to_dict()) == cfg


def test_reset_is_deterministic():
    a, b = reset(CFG, 5), reset(CFG, 5)
    for f in ("positions", "demands", "latency_req", "throughput_req", "patience", "gains", "active"):
        np.testing.assert_array_equal(getattr(a, f), getattr(b, f))
    assert a.t == 0 and np.all(a.patience == CFG.initial_patience)
    assert len(a.users) == CFG.n_users


def test_reset_positions_pass_ks_uniform():
    rng = np.random.default_rng(11)
    xs = np.concatenate([reset(CFG, rng).positions for _ in range(10_000)])
    assert stats.kstest(xs, "uniform").pvalue > 0.01


def test_zero_users_is_immediately_done():
    cfg = replace(CFG, n_users=0)
    s = reset(cfg, 0)
    assert s.users == []
    out = step(s, AllocationAction(np.zeros(0), np.zeros(0), np.zeros(0)), cfg, np.random.default_rng(0))
    assert out.done and out.reward == 0.0 and out.info["case"] is Case.NO_FEEDBACK


def test_mobility_zero_step_and_clipping():
    rng = np.random.default_rng(0)
    x = np.array([0.0, 0.3, 1.0])
    np.testing.assert_array_equal(update_positions(x, 0.0, rng), x)
    assert apply_displacement(np.array([1.0]), np.array([0.05]))[0] == 1.0
    assert apply_displacement(np.array([0.0]), np.array([-0.05]))[0] == 0.0


def test_mobility_random_walk_statistics():
    rng = np.random.default_rng(1)
    x = np.full(100_000, 0.5)
    x1 = update_positions(x, 0.01, rng)
    d = x1 - x
    # Uniform(-0.01, 0.01) has sd 0.01 / sqrt(3)
    assert abs(d.mean()) < 3 * (0.01 / math.sqrt(3)) / math.sqrt(d.size)
    assert np.all((x1 >= 0) & (x1 <= 1))


def test_channel_gain_exponential_for_one_antenna():
    g = sample_channel_gain(1, np.random.default_rng(2), 100_000)
    assert np.all(g >= 0)
    assert abs(g.mean() - 1.0) < 3 / math.sqrt(g.size)


def test_channel_gain_gamma_moments():
    g = sample_channel_gain(4, np.random.default_rng(3), 100_000)
    se_mean = math.sqrt(4 / g.size)
    assert abs(g.mean() - 4.0) < 3 * se_mean
    # var of the sample variance for Gamma(4,1): (mu4 - sigma^4) / n with mu4 = 3k^2 + 6k
    se_var = math.sqrt((3 * 16 + 6 * 4 - 16) / g.size)
    assert abs(g.var() - 4.0) < 3 * se_var
    assert stats.kstest(g, stats.gamma(4).cdf).pvalue > 0.01


def test_channel_gain_rejects_zero_antennas():
    with pytest.raises(ValueError):
        sample_channel_gain(0, np.random.default_rng(0))


def test_sinr_single_user_example():
    cfg = replace(CFG, n_users=1, noise_power=1.0, P_max=10.0)
    # D = x * 5 km = 1 km
    assert compute_sinr(np.array([1.0]), np.array([2.0]), np.array([0.2]), cfg)[0] == pytest.approx(20.0)


def test_sinr_zero_power_is_zero():
    s = compute_sinr(np.array([0.0, 0.5, 0.5]), np.ones(3), np.full(3, 0.3), CFG)
    assert s[0] == 0.0


def test_sinr_two_users_by_hand():
    cfg = replace(CFG, n_users=2, noise_power=0.01, P_max=10.0, alpha_pathloss=3.0)
    p, g, x = np.array([0.6, 0.4]), np.array([3.0, 1.5]), np.array([0.1, 0.4])
    # D = (0.5 km, 2 km); received = p * 10 * D^-3 * g
    r0 = 0.6 * 10 * 8.0 * 3.0
    r1 = 0.4 * 10 * (1 / 8.0) * 1.5
    expect = [r0 / (r1 + 0.01), r1 / (r0 + 0.01)]
    np.testing.assert_allclose(compute_sinr(p, g, x, cfg), expect, rtol=1e-14)


def test_sinr_distance_clamped_at_base_station():
    s = compute_sinr(np.array([1.0]), np.array([1.0]), np.array([0.0]), replace(CFG, n_users=1))
    assert np.isfinite(s[0]) and s[0] == pytest.approx(10 * 0.01**-3 / 1e-2)


def test_sinr_no_cancellation_with_dominant_user():
    # a user at the base station must not wipe out the others' interference sums
    p, g, x = np.array([1.0, 1e-6, 1e-6]), np.ones(3), np.array([0.0, 0.9, 0.95])
    s = compute_sinr(p, g, x, CFG)
    rx = 1e-6 * 10 * (x[1:] * 5) ** -3.0
    assert s[0] == pytest.approx(10 * 1e6 / (rx.sum() + 1e-2), rel=1e-12)


def test_throughput_examples():
    assert compute_throughput(np.array([1.0]), np.array([0.0]), 20.0)[0] == 0.0
    assert compute_throughput(np.array([1.0]), np.array([1.0]), 20.0)[0] == pytest.approx(20.0)
    assert compute_throughput(np.array([0.5]), np.array([3.0]), 20.0)[0] == pytest.approx(20.0)


def test_latency_and_service_rate_examples():
    assert compute_latency(100.0, 50.0, 1.0, 100.0) == pytest.approx(3.0)
    assert service_rate(3.0) == pytest.approx(1 / 3)
    assert compute_latency(1.0, 0.0, 1.0, 100.0) == LATENCY_SENTINEL
    assert compute_latency(1.0, 5.0, 0.0, 100.0) == LATENCY_SENTINEL


def test_reward_case_one():
    r, case = compute_reward([0.01, 0.03], [100, 33], [10, 10], CFG)
    assert r == 0.0 and case is Case.NO_FEEDBACK


def test_reward_at_limit_is_sum_of_rates():
    r, case = compute_reward([0.02, 0.02], [50.0, 50.0], [10, 10], CFG)
    assert case is Case.DEGRADED and r == 100.0


def test_reward_hand_example():
    cfg = replace(CFG, n_users=2, lambda_penalty=1.0, mu_penalty=0.1, latency_limit=0.02, patience_threshold=2)
    r, case = compute_reward([0.01, 0.015], [0.5, 0.5], [10, 2], cfg)
    assert case is Case.DEGRADED
    assert r == pytest.approx(0.915, abs=1e-12)


def test_reward_clamp_flag():
    cfg = replace(CFG, clamp_latency_penalty=True)
    r, _ = compute_reward([0.01, 0.015], [0.5, 0.5], [10, 10], cfg)
    assert r == pytest.approx(1.0)


def test_project_action_examples():
    a = project_action(-np.ones(9))
    assert np.all(a.b == 0) and np.all(a.p == 0) and np.all(a.c == 0)
    a = project_action(np.ones(12), 4)
    np.testing.assert_allclose(np.concatenate([a.b, a.p, a.c]), 0.25)
    with pytest.raises(ValueError):
        project_action(np.ones(8), 3)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=9, max_size=9))
def test_project_action_satisfies_constraints(raw):
    a = project_action(np.array(raw), 3)
    a.validate(3)
    for v in (a.b, a.p, a.c):
        assert v.sum() <= 1 + 1e-9 and np.all((v >= 0) & (v <= 1))


def test_invalid_action_rejected():
    s = reset(CFG, 0)
    with pytest.raises(ValueError):
        step(s, AllocationAction(np.full(3, 0.5), np.full(3, 0.2), np.full(3, 0.2)), CFG, np.random.default_rng(0))
    with pytest.raises(ValueError):
        step(s, AllocationAction(np.full(2, 0.1), np.full(3, 0.2), np.full(3, 0.2)), CFG, np.random.default_rng(0))


def test_zero_action_is_case_one():
    s = reset(CFG, 0)
    z = np.zeros(3)
    out = step(s, AllocationAction(z, z, z), CFG, np.random.default_rng(0))
    assert out.reward == 0.0 and out.info["case"] is Case.NO_FEEDBACK
    assert np.all(out.info["latencies"] == LATENCY_SENTINEL)


def test_single_user_step_hand_pipeline():
    cfg = replace(CFG, n_users=1, latency_limit=0.05)
    s = state_of(cfg, positions=[0.2], demands=[0.5], gains=[2.0], latency_req=[0.5], throughput_req=[1.0])
    out = step(s, AllocationAction(np.ones(1), np.ones(1), np.ones(1)), cfg, np.random.default_rng(0))
    sinr = 1.0 * 10 * 1.0 * 2.0 / 0.01
    T = 20 * math.log2(1 + sinr)
    L = 0.5 / T + 0.5 / 100
    assert out.info["sinr"][0] == pytest.approx(sinr)
    assert out.info["throughputs"][0] == pytest.approx(T)
    assert out.info["latencies"][0] == pytest.approx(L)
    assert out.reward == pytest.approx(1 / L - (L - 0.05))
    assert out.info["case"] is Case.DEGRADED
    assert out.next_state.patience[0] == 10 and out.next_state.t == 1


def test_patience_decrements_and_user_leaves():
    cfg = replace(CFG, n_users=2, initial_patience=2)
    s = state_of(cfg, patience=[1, 2], throughput_req=[1e6, 1e6])
    out = step(s, AllocationAction(np.full(2, 0.5), np.full(2, 0.5), np.full(2, 0.5)), cfg, np.random.default_rng(0))
    np.testing.assert_array_equal(out.next_state.patience, [0, 1])
    np.testing.assert_array_equal(out.next_state.active, [False, True])
    assert out.done and out.info["departed"] and out.info["terminal"]
    late = step(s, AllocationAction(np.full(2, 0.5), np.full(2, 0.5), np.full(2, 0.5)),
                replace(cfg, end_on_departure=False), np.random.default_rng(0))
    assert not late.done and late.info["departed"]


def test_departed_user_can_drop_out_of_reward():
    cfg = replace(CFG, n_users=2, departed_unserved=False)
    s = state_of(cfg, positions=[0.05, 0.05], active=[True, False], patience=[10, 0])
    ev = evaluate_allocation(s, AllocationAction(np.array([1.0, 0.0]), np.array([1.0, 0.0]),
                                                 np.array([1.0, 0.0])), cfg)
    assert ev["case"] is Case.DEGRADED
    assert ev["reward"] == pytest.approx(ev["service_rates"][0] - (ev["latencies"][0] - cfg.latency_limit))


@pytest.mark.parametrize("seed", range(5))
def test_ending_on_departure_keeps_episode_return(seed):
    acts = np.random.default_rng(seed).uniform(-1, 1, (200, 9))

    def episode(end):
        env = MECLatencyEnv(replace(CFG, end_on_departure=end))
        env.reset(seed)
        total, n = 0.0, 0
        for a in acts:
            _, r, done, _ = env.step(a)
            total, n = total + r, n + 1
            if done:
                break
        return total, n

    (short, n_short), (full, n_full) = episode(True), episode(False)
    assert short == full and n_short <= n_full


def test_departed_user_forces_case_one():
    cfg = replace(CFG, n_users=2)
    s = state_of(cfg, positions=[0.05, 0.05], active=[True, False], patience=[10, 0])
    ev = evaluate_allocation(s, AllocationAction(np.array([1.0, 0.0]), np.array([1.0, 0.0]),
                                                 np.array([1.0, 0.0])), cfg)
    assert ev["latencies"][0] < cfg.latency_limit
    assert ev["case"] is Case.NO_FEEDBACK and ev["reward"] == 0.0
    assert ev["sinr"][1] == 0.0 and ev["service_rates"][1] == 0.0


def test_episode_ends_when_all_leave():
    cfg = replace(CFG, n_users=1, initial_patience=1)
    s = state_of(cfg, patience=[1], throughput_req=[1e9])
    out = step(s, AllocationAction(np.ones(1), np.ones(1), np.ones(1)), cfg, np.random.default_rng(0))
    assert out.done and not out.next_state.active.any()


def test_episode_length_respected():
    cfg = replace(CFG, episode_length=7, initial_patience=1000)
    env = MECLatencyEnv(cfg)
    env.reset(0)
    n, done = 0, False
    while not done:
        _, _, done, _ = env.step(np.zeros(9))
        n += 1
    assert n == 7


def test_trajectories_are_deterministic():
    def roll(seed):
        env = MECLatencyEnv(CFG)
        obs = [env.reset(seed)]
        acts = np.random.default_rng(99).uniform(-1, 1, (50, 9))
        rs = []
        for a in acts:
            o, r, d, _ = env.step(a)
            obs.append(o)
            rs.append(r)
            if d:
                break
        return np.array(obs), np.array(rs)

    (o1, r1), (o2, r2) = roll(4), roll(4)
    np.testing.assert_array_equal(o1, o2)
    np.testing.assert_array_equal(r1, r2)


def test_observation_layout_and_inactive_padding():
    s = reset(CFG, 3)
    s.active[1] = False
    o = encode_observation(s, CFG)
    assert o.shape == (15,)
    assert np.all(o[5:10] == 0.0)
    assert o[4] == s.positions[0]
    assert o[3] == pytest.approx(1.0)


def test_observation_normalisation_maps_maxima_to_one():
    cfg = CFG
    s = state_of(cfg, gains=np.full(3, cfg.M_antennas), demands=np.full(3, cfg.demand_range[1]),
                 latency_req=np.full(3, cfg.latency_req_range[1]), patience=np.full(3, cfg.initial_patience),
                 positions=np.ones(3))
    np.testing.assert_allclose(encode_observation(s, cfg), 1.0)


def test_observation_round_trip():
    s = reset(CFG, 8)
    back = decode_observation(encode_observation(s, CFG), CFG)
    for k in ("gains", "demands", "latency_req", "positions"):
        np.testing.assert_allclose(back[k], getattr(s, k), atol=1e-12)
    np.testing.assert_allclose(back["patience"], s.patience, atol=1e-12)


def _random_steps(cfg, n, seed):
    rng = np.random.default_rng(seed)
    s = reset(cfg, rng)
    for _ in range(n):
        a = project_action(rng.uniform(-1, 1, cfg.action_dim), cfg.n_users)
        out = step(s, a, cfg, rng)
        yield s, a, out
        s = reset(cfg, rng) if out.done else out.next_state


def test_case_one_iff_zero_reward_on_random_steps():
    for _, _, out in _random_steps(replace(CFG, demand_range=(0.001, 0.005)), 10_000, 0):
        over = np.any(out.info["latencies"] > CFG.latency_limit)
        assert (out.info["case"] is Case.NO_FEEDBACK) == over
        if over:
            assert out.reward == 0.0


def test_positions_and_episode_bounds_hold():
    for s, _, out in _random_steps(CFG, 3000, 1):
        assert np.all((out.next_state.positions >= 0) & (out.next_state.positions <= 1))
        assert out.next_state.t <= CFG.episode_length


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=3, max_size=3), st.floats(0, 0.5), st.integers(0, 2))
def test_throughput_monotone_in_bandwidth(b, extra, i):
    s = reset(CFG, 0)
    p = np.full(3, 0.3)
    sinr = compute_sinr(p, s.gains, s.positions, CFG)
    b = np.array(b) / 3
    b2 = b.copy()
    b2[i] += extra
    assert np.all(compute_throughput(b2, sinr, 20.0) >= compute_throughput(b, sinr, 20.0))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 0.3), min_size=3, max_size=3), st.floats(0, 0.1), st.integers(0, 2),
       st.integers(0, 2))
def test_sinr_monotone_in_others_power(p, extra, i, j):
    if i == j:
        return
    s = reset(CFG, 1)
    p = np.array(p)
    p2 = p.copy()
    p2[j] += extra
    assert compute_sinr(p2, s.gains, s.positions, CFG)[i] <= compute_sinr(p, s.gains, s.positions, CFG)[i]


def test_random_policy_is_sparse():
    assert random_policy_case1_fraction(CFG, 2000, 0) > 0.8


def test_trace_replays_exactly(tmp_path):
    path = tmp_path / "trace.csv"
    rng = np.random.default_rng(0)
    with TraceWriter(path, CFG) as tw:
        env = MECLatencyEnv(CFG, tw)
        env.reset(rng)
        for _ in range(300):
            _, _, done, _ = env.step(rng.uniform(-1, 1, 9))
            if done:
                env.reset(rng)
    report = replay_trace(path)
    assert report.rows == 300 and report.case_mismatches == 0
    assert report.ok()


def test_replay_detects_tampering(tmp_path):
    path = tmp_path / "trace.csv"
    with TraceWriter(path, CFG) as tw:
        env = MECLatencyEnv(CFG, tw)
        env.reset(0)
        for _ in range(5):
            env.step(np.ones(9))
    lines = path.read_text().splitlines()
    header = lines[1].split(",")
    row = lines[2].split(",")
    k = header.index("T_0")
    row[k] = repr(float(row[k]) * (1 + 1e-6))
    lines[2] = ",".join(row)
    path.write_text("\n".join(lines) + "\n")
    assert not replay_trace(path).ok()
