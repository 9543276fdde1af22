import itertools
import numpy as np
import pandas as pd
import pytest
import torch

from env.mdp import SystemState, enumerate_actions, is_valid_action
from model import load_model
from agent.structure import ExplorationSchedule, LOOSE, TIGHT, CONVENTIONAL
from agent.ddpg import (SEDDPGAgent, map_virtual_to_schedule, canonical_virtual, actor_outputs, actor_explore,
                        se_action_ddpg, critic_loss, critic_loss_and_grad, actor_loss, actor_loss_and_grad,
                        train_se_ddpg, RECONCILED, LITERAL)
from harness.gradcheck import random_batch, run_gradchecks
from conftest import make_spec


class StubActor:
    '''Actor stand-in computing virtual actions from the AoI features.'''
    def __init__(self, fn):
        self.fn = fn

    def __call__(self, s):
        return torch.stack([torch.as_tensor(self.fn(row), dtype=torch.float64) for row in s])


def _nets(N, M, hidden=(16, 16)):
    return (load_model('actor', N=N, M=M, hidden=hidden), load_model('critic', N=N, M=M, hidden=hidden),
            load_model('actor', N=N, M=M, hidden=hidden), load_model('critic', N=N, M=M, hidden=hidden))


@pytest.mark.parametrize('M, expected', [(1, (0, 0, 1)), (2, (2, 0, 1))])
def test_ranking_map_examples(M, expected):
    spec = make_spec(N=3, M=M)
    assert tuple(map_virtual_to_schedule([0.2, -0.5, 0.9], spec)) == expected


def test_ranking_map_ties_by_index():
    spec = make_spec(N=4, M=2)
    assert tuple(map_virtual_to_schedule(np.zeros(4), spec)) == (1, 2, 0, 0)


def test_ranking_map_always_valid(rng):
    spec = make_spec(N=5, M=3)
    for _ in range(500):
        assert is_valid_action(map_virtual_to_schedule(rng.normal(size=5) * 10, spec), 5, 3)


def test_canonical_examples():
    np.testing.assert_allclose(canonical_virtual((1, 0), make_spec(N=2, M=1)), [1.0, -1.0])
    v = canonical_virtual((0, 1, 0, 2), make_spec(N=4, M=2))
    assert v[1] == 1.0 and v[3] == 0.5
    assert 0.5 > v[0] > v[2] and v[2] == pytest.approx(-1.0)


def test_canonical_round_trip_exhaustive():
    for N in range(1, 7):
        for M in range(1, N + 1):
            spec = make_spec(N=N, M=M, drop_prob=(0.1,))
            for action in enumerate_actions(N, M):
                v = canonical_virtual(action, spec)
                assert np.all(np.abs(v) <= 1.0 + 1e-12)
                assert map_virtual_to_schedule(v, spec) == action


def test_explore_without_noise_is_actor_output(rng):
    spec = make_spec(N=3, M=2)
    actor = load_model('actor', N=3, M=2, hidden=(16,))
    state = SystemState([1, 4, 2], np.ones((3, 2)))
    np.testing.assert_array_equal(actor_explore(actor, state, 0.0, rng, spec), actor_outputs(actor, [state], spec)[0])
    for _ in range(100):
        v = actor_explore(actor, state, 10.0, rng, spec)
        assert np.all(np.abs(v) <= 1.0)


def _aoi_actor(row):
    # favours sensor 1 unless its AoI is strictly larger than sensor 2's
    return [-1.0, 1.0] if row[0] > row[1] else [1.0, -1.0]


def test_se_candidate_executed_as_canonical(rng):
    spec = make_spec(N=2, M=1)
    actor = StubActor(lambda row: [1.0, -1.0])
    sched = ExplorationSchedule(epsilon=0.0, xi=0.0, sigma=0.0)
    state = SystemState([2, 2], [[2], [2]])
    for stage in (LOOSE, TIGHT):
        v, v_hat, v_tilde = se_action_ddpg(actor, None, state, sched, stage, spec, rng)
        assert v_hat is not None and np.array_equal(v, v_hat)
        np.testing.assert_array_equal(v_hat, [1.0, -1.0])
        assert is_valid_action(map_virtual_to_schedule(v, spec), 2, 1)


def test_no_surviving_candidate_explores(rng):
    spec = make_spec(N=2, M=1)
    actor = StubActor(_aoi_actor)
    sched = ExplorationSchedule(epsilon=0.0, xi=0.0, sigma=0.0)
    state = SystemState([3, 2], [[1], [1]])
    v, v_hat, v_tilde = se_action_ddpg(actor, None, state, sched, LOOSE, spec, rng)
    assert v_hat is None
    np.testing.assert_array_equal(v, [-1.0, 1.0])
    np.testing.assert_array_equal(v_tilde, [-1.0, 1.0])


def test_conventional_stage_never_annotates(rng):
    spec = make_spec(N=2, M=1)
    actor = StubActor(lambda row: [1.0, -1.0])
    sched = ExplorationSchedule(epsilon=0.0, xi=0.0, sigma=0.1)
    _, v_hat, _ = se_action_ddpg(actor, None, SystemState([2, 2], [[2], [2]]), sched, CONVENTIONAL, spec, rng)
    assert v_hat is None


def _ddpg_batch(N, M, rng, se_fraction=0.5, B=16):
    batch = random_batch(N, M, B, rng, virtual=True)
    batch['se'] = torch.from_numpy(rng.random(B) < se_fraction)
    return batch


def test_critic_loss_degenerations(rng):
    torch.manual_seed(0)
    actor, critic, t_actor, t_critic = _nets(3, 2)
    batch = _ddpg_batch(3, 2, rng)
    with torch.no_grad():
        y = batch['r'] + 0.95 * t_critic(batch['s_next'], t_actor(batch['s_next']))
        plain = ((y - critic(batch['s'], batch['v'])) ** 2).mean().item()
    assert abs(critic_loss(batch, critic, t_critic, t_actor, 1.0, 0.95).item() - plain) <= 1e-12
    batch['se'][:] = False
    for alpha1 in (0.0, 0.5):
        assert abs(critic_loss(batch, critic, t_critic, t_actor, alpha1, 0.95).item() - plain) <= 1e-12


def test_actor_loss_forms(rng):
    torch.manual_seed(1)
    actor, critic, _, _ = _nets(3, 2)
    batch = _ddpg_batch(3, 2, rng)
    with torch.no_grad():
        q = critic(batch['s'], actor(batch['s']))
    assert actor_loss(batch, actor, critic, 1.0).item() == pytest.approx(-q.mean().item(), abs=1e-12)
    assert actor_loss(batch, actor, critic, 1.0, LITERAL).item() == pytest.approx(q.mean().item(), abs=1e-12)
    batch['se'][:] = False
    for alpha2 in (0.0, 0.9):
        assert actor_loss(batch, actor, critic, alpha2, RECONCILED).item() == pytest.approx(-q.mean().item(), abs=1e-12)


def test_actor_update_leaves_critic_alone(rng):
    actor, critic, t_actor, t_critic = _nets(2, 1)
    batch = _ddpg_batch(2, 1, rng)
    _, grads = actor_loss_and_grad(batch, actor, critic, 0.9)
    assert len(grads) == len(list(actor.parameters()))
    assert all(p.grad is None for p in critic.parameters())
    _, cgrads = critic_loss_and_grad(batch, critic, t_critic, t_actor, 0.5, 0.95)
    assert all(p.grad is None for p in itertools.chain(t_actor.parameters(), t_critic.parameters()))
    assert len(cgrads) == len(list(critic.parameters()))


def test_loss_gradients_match_finite_differences():
    worst = run_gradchecks(N=3, M=2, seed=0, verbose=False)
    assert set(worst) == {'se_dqn', 'critic', 'actor_reconciled', 'actor_literal'}
    assert max(worst.values()) <= 1e-4


def test_training_is_deterministic(tiny_config):
    spec = make_spec(N=2, M=1, tau_cap=20)
    config = tiny_config.for_agent('se_ddpg')
    _, log_a = train_se_ddpg(spec, config, seed=1, verbose=False)
    _, log_b = train_se_ddpg(spec, config, seed=1, verbose=False)
    pd.testing.assert_frame_equal(log_a, log_b)
    assert {'actor_loss_mean', 'critic_loss_mean', 'noise_sigma'} <= set(log_a.columns)


def test_zero_se_stages_with_unit_alpha2_is_plain_ddpg(tiny_config):
    spec = make_spec(N=2, M=1, tau_cap=20)
    plain = tiny_config.for_agent('ddpg')
    plain.alpha2 = 1.0
    other = tiny_config.for_agent('ddpg')
    other.alpha2 = 0.9
    agent_a, log_a = train_se_ddpg(spec, plain, seed=4, verbose=False)
    agent_b, log_b = train_se_ddpg(spec, other, seed=4, verbose=False)
    pd.testing.assert_frame_equal(log_a, log_b)
    for p, q in zip(agent_a.actor.parameters(), agent_b.actor.parameters()):
        assert torch.equal(p, q)


def test_soft_target_tracks_online(tiny_config):
    spec = make_spec(N=2, M=1, tau_cap=20)
    config = tiny_config.for_agent('se_ddpg')
    config.delta = 1.0
    agent = SEDDPGAgent(spec, config, seed=0)
    agent.train(verbose=False)
    for t, o in zip(agent.target_critic.parameters(), agent.critic.parameters()):
        assert torch.equal(t, o)


@pytest.mark.parametrize('delta', [0.005, 0.3])
def test_soft_updates_shrink_target_gap_geometrically(tiny_config, rng, delta):
    spec = make_spec(N=2, M=1, tau_cap=20)
    config = tiny_config.for_agent('se_ddpg')
    config.delta = delta
    agent = SEDDPGAgent(spec, config, seed=0)
    state = SystemState([2, 3], [[1], [2]])
    for _ in range(config.batch_size):
        agent.remember(state, rng.uniform(-1, 1, 2), None, rng.uniform(-1, 1, 2), -1.0, state)
    pairs = [(agent.target_actor, agent.actor), (agent.target_critic, agent.critic)]
    with torch.no_grad():
        for target, _ in pairs:
            for p in target.parameters():
                p.add_(torch.randn_like(p))
    gaps = [[t - o for t, o in zip(target.parameters(), online.parameters())] for target, online in pairs]
    k = 40
    for _ in range(k):
        agent.after_step()
    for (target, online), gap in zip(pairs, gaps):
        for t, o, g in zip(target.parameters(), online.parameters(), gap):
            torch.testing.assert_close(t - o, (1.0 - delta) ** k * g, rtol=0, atol=1e-10)
