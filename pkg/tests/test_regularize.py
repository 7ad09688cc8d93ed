import math

import numpy as np
import pytest

from crisp.regularize import (
    Discriminator,
    ExpertBatch,
    Regularizer,
    RegularizerConfig,
    bc_policy_loss,
    disc_update,
    irl_policy_loss,
    lsgan_disc_loss,
)
from crisp.rl import Batch, SacAgent, SacConfig


def tabular_fit(p_e, p_g, steps=(20000,), lrs=(0.05,), rows=20):
    """Fit a one-hot (tabular) LSGAN discriminator to exact expectations; returns D per support point.

    Targets of 0 or 1 sit at infinite logits, so the fit needs many steps to get within 1e-3.
    """
    k = len(p_e)
    eye = np.eye(k)
    disc = Discriminator(k, 0, np.random.default_rng(0), conditioned=False, hidden=())
    ex = np.repeat(eye, np.round(np.asarray(p_e) * rows).astype(int), axis=0)
    po = np.repeat(eye, np.round(np.asarray(p_g) * rows).astype(int), axis=0)
    for n, lr in zip(steps, lrs):
        disc.opt.lr = lr
        for _ in range(n):
            disc_update(disc, ex, po)
    return disc.net(eye)[:, 0]


def test_lsgan_losses():
    loss, ge, gp = lsgan_disc_loss(np.ones((4, 1)), np.zeros((4, 1)))
    assert loss == 0.0 and not ge.any() and not gp.any()
    loss, g = irl_policy_loss(np.ones((3, 1)))
    assert loss == 0.0 and not g.any()
    loss, _ = irl_policy_loss(np.zeros((3, 1)))
    assert loss == 0.5


def test_tabular_fixed_point_mixed():
    d = tabular_fit([1.0, 0.0], [0.5, 0.5])
    assert d[0] == pytest.approx(2 / 3, abs=1e-3)
    assert d[1] == pytest.approx(0.0, abs=1e-3)


def test_tabular_fixed_point_identical():
    d = tabular_fit([0.5, 0.5], [0.5, 0.5])
    np.testing.assert_allclose(d, 0.5, atol=1e-3)


def test_tabular_fixed_point_disjoint():
    d = tabular_fit([1.0, 0.0], [0.0, 1.0])
    assert d[0] == pytest.approx(1.0, abs=1e-3) and d[1] == pytest.approx(0.0, abs=1e-3)


def _agent(seed=0):
    return SacAgent(1, 1, 1, np.random.default_rng(seed), SacConfig(alpha=0.01, lr=1e-3))


def _constant_disc(reg, value_logit):
    net = reg.disc.net
    p = np.zeros_like(net.params)
    p[-1] = value_logit  # output bias
    net.set_params(p)


@pytest.mark.parametrize("logit,loss", [(50.0, 0.0), (-50.0, 0.5)])
def test_frozen_constant_discriminator(logit, loss):
    agent = _agent()
    reg = Regularizer(RegularizerConfig("irl", psi=1.0), 1, 2, np.random.default_rng(1), "lower")
    _constant_disc(reg, logit)
    eb = ExpertBatch(agent.obs(np.zeros((8, 1)), np.zeros((8, 1))), np.zeros((8, 1)))
    value, grad = reg.policy_term(eb, np.random.default_rng(2).normal(size=(8, 1)))(agent)
    assert value == pytest.approx(loss, abs=1e-12)
    assert not np.any(grad)


def test_irl_toy_policy_moves_to_expert():
    agent = _agent(3)
    for net in (agent.q1, agent.q2):
        net.set_params(np.zeros_like(net.params))  # no RL signal
    # start the policy mean at -0.8
    W, b = agent.actor._views[-1]
    W[:, 0] = 0.0
    b[0] = math.atanh(-0.8)
    b[1] = math.log(0.1)
    agent.actor.touched()
    reg = Regularizer(RegularizerConfig("irl", psi=1.0, lr=1e-3), 1, 2, np.random.default_rng(4), "lower")
    rng = np.random.default_rng(5)
    n = 64
    obs = agent.obs(np.zeros((n, 1)), np.zeros((n, 1)))
    eb = ExpertBatch(obs, np.full((n, 1), 0.8))
    rl = Batch(np.zeros((n, 1)), np.zeros((n, 1)), np.zeros((n, 1)), np.zeros(n), np.zeros((n, 1)), np.ones(n))
    mean = lambda: float(agent.act_batch(np.zeros((1, 1)), np.zeros((1, 1)))[0, 0])  # noqa: E731
    assert mean() == pytest.approx(-0.8)
    crossed = None
    for step in range(2000):
        reg.disc_step(agent, eb, rng.normal(size=(n, 1)))
        agent.actor_update(rl, rng.normal(size=(n, 1)), reg.policy_term(eb, rng.normal(size=(n, 1))))
        if mean() > 0:
            crossed = step
            break
    assert crossed is not None


def test_bc_loss():
    out = np.array([[0.1, -0.2], [0.3, 0.4]])
    assert bc_policy_loss(out, out)[0] == 0.0
    assert bc_policy_loss(out + 0.25, out)[0] == pytest.approx(0.0625)
    loss, g = bc_policy_loss(out, np.zeros_like(out))
    eps = 1e-6
    e = np.zeros_like(out)
    e[1, 0] = eps
    num = (bc_policy_loss(out + e, np.zeros_like(out))[0] - bc_policy_loss(out - e, np.zeros_like(out))[0]) / (2 * eps)
    assert num == pytest.approx(g[1, 0])
    np.testing.assert_allclose(g / np.sign(out), np.abs(g))  # gradient points along output - target


def test_bc_term_gradient_matches_finite_difference():
    agent = _agent(6)
    reg = Regularizer(RegularizerConfig("bc", psi=0.7), 1, 2, None, "lower")
    eb = ExpertBatch(agent.obs(np.linspace(-1, 1, 5)[:, None], np.zeros((5, 1))), np.full((5, 1), 0.3))
    term = reg.policy_term(eb, None)
    _, grad = term(agent)
    p0 = agent.actor.params.copy()
    for i in (0, 7, len(p0) - 1, len(p0) - 3):
        eps = 1e-6
        agent.actor.set_params(p0 + eps * np.eye(len(p0))[i])
        up = term(agent)[0]
        agent.actor.set_params(p0 - eps * np.eye(len(p0))[i])
        down = term(agent)[0]
        agent.actor.set_params(p0)
        assert (up - down) / (2 * eps) == pytest.approx(grad[i], rel=1e-4, abs=1e-9)


def test_trace_separates_min_and_max_steps():
    agent = _agent(7)
    reg = Regularizer(RegularizerConfig("irl", psi=0.1), 1, 2, np.random.default_rng(8), "lower")
    rng = np.random.default_rng(9)
    n = 16
    eb = ExpertBatch(agent.obs(np.zeros((n, 1)), np.zeros((n, 1))), np.full((n, 1), 0.5))
    rl = Batch(np.zeros((n, 1)), np.zeros((n, 1)), np.zeros((n, 1)), -np.ones(n), np.zeros((n, 1)), np.zeros(n))
    for _ in range(3):
        reg.disc_step(agent, eb, rng.normal(size=(n, 1)))
        agent.actor_update(rl, rng.normal(size=(n, 1)), reg.policy_term(eb, rng.normal(size=(n, 1))))
    kinds = [t[0] for t in reg.trace]
    assert kinds == ["disc", "policy"] * 3
    for (_, a_d, d_d), (_, a_p, d_p) in zip(reg.trace[::2], reg.trace[1::2]):
        assert a_p == a_d  # the policy term reads the actor the discriminator just saw
        assert d_p == d_d + 1  # and the discriminator after its own step


def test_config_validation():
    with pytest.raises(ValueError):
        RegularizerConfig("gail")
    with pytest.raises(ValueError):
        RegularizerConfig("irl", psi=-1)
    assert not RegularizerConfig("irl", psi=0).active
    assert not RegularizerConfig("none", psi=1).active
