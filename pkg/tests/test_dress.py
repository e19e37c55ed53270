import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dressrl.dress import (
    ChainNoise,
    DressConfig,
    DressShaper,
    EvaluationAgent,
    GenerationAgent,
    combine_rewards,
    denoiser_supervised_loss,
    dress_observation,
    evaluation_loss,
    evaluation_td_target,
    evaluation_update,
    generate_reward,
    generation_loss,
    generation_update,
)
from dressrl.gradcheck import _dress
from dressrl.nn import check_gradients, unpack
from dressrl.oracles import QuadraticBowlCritic, train_against_stub

SMALL = DressConfig(denoiser_hidden=(16, 16), head_hidden=(8,), q_hidden=(16, 16), batch_size=8, capacity=100)


class ConstantCritic:
    def __init__(self, value):
        self.value_ = value
        self.gamma = 0.99

    def value_and_grad_r(self, cond, r):
        return np.full(len(r), self.value_), np.zeros(len(r))

    def value(self, cond, r, target=False):
        return np.full(len(r), self.value_)


def test_denoiser_input_dim():
    agent = GenerationAgent(5, 3, DressConfig(), np.random.default_rng(0))
    assert agent.denoiser_spec.input_dim == 8 + 5 + 3 + 8


def test_dress_observation_concatenates():
    np.testing.assert_array_equal(dress_observation(np.array([1.0, 2.0]), np.array([[3.0]])), [1, 2, 3])


def test_combine_rewards():
    assert combine_rewards(1.0, 0.5, 0.2) == pytest.approx(1.1)
    assert combine_rewards(0.37, 123.0, 0.0) == 0.37
    with pytest.raises(ValueError):
        combine_rewards(1.0, 1.0, -0.1)


@settings(max_examples=100, deadline=None)
@given(st.floats(-1e3, 1e3), st.floats(-1, 1), st.floats(0, 1), st.floats(0, 1))
def test_combine_rewards_additive_in_beta(r_e, r_g, b1, b2):
    lhs = (combine_rewards(r_e, r_g, b1) - r_e) + (combine_rewards(r_e, r_g, b2) - r_e)
    assert lhs == pytest.approx(combine_rewards(r_e, r_g, b1 + b2) - r_e, abs=1e-9)


def test_fresh_head_deterministic_reward_is_bias():
    cfg = DressConfig(e_s=2.0, e_b=0.3)
    agent = GenerationAgent(3, 2, cfg, np.random.default_rng(0))
    r = agent.generate(np.ones((4, 5)), ChainNoise.zeros(4, 8, 5), stochastic=False)
    np.testing.assert_allclose(r, 0.3)


def test_generate_reward_scalar_and_bounded():
    agent = GenerationAgent(3, 2, DressConfig(), np.random.default_rng(0))
    r = generate_reward(agent, np.zeros(3), np.zeros(2), np.random.default_rng(1))
    assert isinstance(r, float) and -1.0 <= r <= 1.0


def _batch(rng, n=2, cond_dim=5):
    return {"s_g": rng.normal(size=(n, cond_dim)), "r_g": rng.uniform(-1, 1, n),
            "s_g_next": rng.normal(size=(n, cond_dim)), "r_e": np.array([0.5, -1.0])[:n], "done": np.zeros(n)}


def test_td_target_done_drops_bootstrap():
    rng = np.random.default_rng(0)
    gen = GenerationAgent(3, 2, SMALL, rng)
    ev = EvaluationAgent(5, SMALL, rng)
    b = _batch(rng)
    b["done"] = np.ones(2)
    np.testing.assert_array_equal(evaluation_td_target(b, ev, gen, rng), b["r_e"])


def test_td_target_gamma_zero():
    rng = np.random.default_rng(0)
    cfg = DressConfig(gamma=0.0, denoiser_hidden=(8,), head_hidden=(8,), q_hidden=(8,))
    gen, ev = GenerationAgent(3, 2, cfg, rng), EvaluationAgent(5, cfg, rng)
    b = _batch(rng)
    np.testing.assert_array_equal(evaluation_td_target(b, ev, gen, rng), b["r_e"])


def test_td_target_with_stub_target_network():
    rng = np.random.default_rng(0)
    gen = GenerationAgent(3, 2, SMALL, rng)
    ev = EvaluationAgent(5, SMALL, rng)
    # a target network that outputs exactly 1.0: zero weights, output bias 1
    ev.q_target.values[:] = 0.0
    unpack(ev.spec, ev.q_target.values)[-1][1][:] = 1.0
    b = _batch(rng)
    np.testing.assert_allclose(evaluation_td_target(b, ev, gen, rng), b["r_e"] + 0.99)


def test_td_target_regenerates_next_reward():
    rng = np.random.default_rng(0)
    gen = GenerationAgent(3, 2, SMALL, rng)
    ev = EvaluationAgent(5, SMALL, rng)
    b = _batch(rng)
    y1 = evaluation_td_target(b, ev, gen, np.random.default_rng(3))
    gen.phi_mu.values += 0.5
    y2 = evaluation_td_target(b, ev, gen, np.random.default_rng(3))
    assert not np.allclose(y1, y2)


def test_evaluation_loss_zero_when_exact():
    rng = np.random.default_rng(0)
    ev = EvaluationAgent(5, SMALL, rng)
    b = _batch(rng)
    y = ev.value(b["s_g"], b["r_g"])
    assert evaluation_loss(b, ev, y) == 0.0
    before = ev.q.values.copy()
    evaluation_update(b, ev, None, rng, y=y)
    np.testing.assert_allclose(ev.q.values, before, atol=1e-12)


def test_evaluation_gradient_matches_finite_differences():
    assert _dress(3)["dress_evaluation"] < 1e-4


@pytest.mark.parametrize("seed", range(3))
def test_generation_gradient_k2_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    cfg = DressConfig(K=2, denoiser_hidden=(8, 8), head_hidden=(8,), q_hidden=(8, 8))
    gen, ev = GenerationAgent(3, 2, cfg, rng), EvaluationAgent(5, cfg, rng)
    for p in (gen.phi_mu, gen.phi_sigma):
        p.values += 0.3 * rng.normal(size=p.values.shape)
    cond, noise = rng.normal(size=(2, 5)), gen.draw_noise(rng, 2)

    def grads():
        for p in gen.param_sets:
            p.zero_grad()
        generation_loss(cond, gen, ev, noise, accumulate=True)
        return [p.grads.copy() for p in gen.param_sets]

    assert check_gradients(lambda: generation_loss(cond, gen, ev, noise), grads, gen.param_sets) < 1e-3


def test_generation_gradient_untouched_critic():
    rng = np.random.default_rng(0)
    gen, ev = GenerationAgent(3, 2, SMALL, rng), EvaluationAgent(5, SMALL, rng)
    before = ev.q.values.copy()
    generation_update({"s_g": rng.normal(size=(8, 5))}, gen, ev, rng)
    np.testing.assert_array_equal(ev.q.values, before)
    assert np.all(ev.q.grads == 0.0)


def test_constant_critic_gives_zero_gradient():
    rng = np.random.default_rng(0)
    gen = GenerationAgent(3, 2, SMALL, rng)
    for p in gen.param_sets:
        p.zero_grad()
    generation_loss(rng.normal(size=(4, 5)), gen, ConstantCritic(2.0), gen.draw_noise(rng, 4), accumulate=True)
    assert all(np.all(p.grads == 0.0) for p in gen.param_sets)


def test_quadratic_bowl_converges_to_argmax():
    _, mean = train_against_stub(0.7, updates=500, seed=0)
    assert abs(mean - 0.7) < 0.05


def test_quadratic_bowl_critic_gradient():
    q, g = QuadraticBowlCritic(0.7).value_and_grad_r(None, np.array([0.7, 0.2]))
    np.testing.assert_allclose(q, [0.0, -0.25])
    np.testing.assert_allclose(g, [0.0, 1.0])


def test_evaluation_update_overfits_fixed_batch():
    rng = np.random.default_rng(0)
    cfg = DressConfig(q_hidden=(32, 32), lr_evaluation=3e-3)
    ev = EvaluationAgent(5, cfg, rng)
    b = {"s_g": rng.normal(size=(32, 5)), "r_g": rng.uniform(-1, 1, 32)}
    y = np.sin(b["s_g"][:, 0]) + b["r_g"]
    first = evaluation_loss(b, ev, y)
    losses = [evaluation_update(b, ev, None, rng, y=y) for _ in range(2000)]
    assert losses[99] < first
    assert evaluation_loss(b, ev, y) < 1e-3


def test_evaluation_update_skips_nonfinite():
    rng = np.random.default_rng(0)
    ev = EvaluationAgent(5, SMALL, rng)
    b = _batch(rng)
    before = ev.q.values.copy()
    loss = evaluation_update(b, ev, None, rng, y=np.array([np.nan, 0.0]))
    assert np.isnan(loss) and ev.skipped_updates == 1
    np.testing.assert_array_equal(ev.q.values, before)


def test_target_network_soft_updated():
    rng = np.random.default_rng(0)
    ev = EvaluationAgent(5, SMALL, rng)
    b = _batch(rng)
    tgt = ev.q_target.values.copy()
    evaluation_update(b, ev, None, rng, y=np.array([5.0, -5.0]))
    np.testing.assert_allclose(ev.q_target.values, tgt + SMALL.tau * (ev.q.values - tgt), atol=1e-15)


def test_supervised_loss_trivial_cases():
    rng = np.random.default_rng(0)
    gen = GenerationAgent(3, 2, SMALL, rng)
    cond = rng.normal(size=(16, 5))
    z0 = rng.normal(size=(16, 8))
    z0 /= np.linalg.norm(z0, axis=1, keepdims=True)
    k = rng.integers(1, SMALL.K + 1, 16)
    eps = rng.normal(size=(16, 8))
    gen.theta.values[:] = 0.0
    assert denoiser_supervised_loss(gen, cond, z0, k, eps) == pytest.approx(1.0)


def test_supervised_regression_learns():
    rng = np.random.default_rng(0)
    cfg = DressConfig(denoiser_hidden=(64, 64), lr_generation=1e-3)
    gen = GenerationAgent(2, 1, cfg, rng)
    # z0 is a fixed function of the condition, so a perfect predictor exists
    proj = rng.normal(size=(3, 8))

    def draw(n):
        cond = rng.uniform(-1, 1, (n, 3))
        return cond, np.tanh(cond @ proj), rng.integers(1, cfg.K + 1, n), rng.normal(size=(n, 8))

    c, z, k, e = draw(512)
    initial = denoiser_supervised_loss(gen, c, z, k, e)
    from dressrl.nn import adam_step

    for _ in range(2000):
        cb, zb, kb, eb = draw(64)
        gen.theta.zero_grad()
        denoiser_supervised_loss(gen, cb, zb, kb, eb, accumulate=True)
        adam_step(gen.theta, cfg.lr_generation)
    assert denoiser_supervised_loss(gen, c, z, k, e) < 0.1 * initial


def test_shaper_delays_record_until_next_action():
    rng = np.random.default_rng(0)
    sh = DressShaper(3, 2, SMALL, rng)
    s0, a0, s1, a1 = np.zeros(3), np.full(2, 0.1), np.ones(3), np.full(2, 0.2)
    sh.observe(s0, a0, 0.3, s1, 1.0, False)
    assert len(sh.buffer) == 0
    sh.observe(s1, a1, 0.4, np.full(3, 2.0), 0.0, True)
    assert len(sh.buffer) == 1
    rec = sh.buffer.ordered()
    np.testing.assert_array_equal(rec["s_g_next"][0], np.concatenate([s1, a1]))
    sh.end_episode()
    rec = sh.buffer.ordered()
    np.testing.assert_array_equal(rec["s_g_next"][1], np.concatenate([np.full(3, 2.0), np.zeros(2)]))
    assert rec["done"][1] == 1.0 and rec["r_g"][1] == 0.4


def test_shaper_update_is_deterministic():
    def run():
        rng = np.random.default_rng(0)
        sh = DressShaper(3, 2, SMALL, rng)
        for i in range(20):
            s, a = rng.normal(size=3), rng.uniform(-1, 1, 2)
            sh.observe(s, a, sh.reward(s, a, rng), s, float(i % 3 == 0), i % 5 == 4)
        sh.end_episode()
        out = [sh.update(rng) for _ in range(5)]
        return out, sh.gen.theta.values.copy()

    (l1, t1), (l2, t2) = run(), run()
    assert l1 == l2
    np.testing.assert_array_equal(t1, t2)
