import numpy as np
import pandas as pd
import pytest
import torch

from env.mdp import SystemState, is_valid_action
from model import load_model
from model.gradcheck import directional_gradcheck, GRADCHECK_TOL
from agent.structure import ExplorationSchedule, CONVENTIONAL, states_to_tensor
from agent.dqn import (SEDQNAgent, greedy_action, greedy_indices, loose_se_action, tight_se_action, dqn_loss,
                       se_loss, se_loss_and_grad, train_se_dqn)
from harness.gradcheck import random_batch
from util.exceptions import NonFiniteLoss
from conftest import make_spec


def _qnet(spec, hidden=(16, 16)):
    return load_model('qnet', N=spec.N, M=spec.M, n_actions=len(spec.actions), hidden=hidden)


def _set_output(net, bias):
    with torch.no_grad():
        net.layers[-1].weight.zero_()
        net.layers[-1].bias.copy_(torch.as_tensor(bias, dtype=torch.float64))


def test_constant_network_picks_first_action():
    spec = make_spec(N=3, M=2)
    net = _qnet(spec)
    _set_output(net, np.zeros(6))
    assert greedy_action(net, SystemState([1, 2, 3], np.ones((3, 2))), spec) == spec.actions[0]


def test_one_hot_network_picks_its_action():
    spec = make_spec(N=3, M=2)
    net = _qnet(spec)
    _set_output(net, np.eye(6)[4] * 100)
    assert greedy_action(net, SystemState([1, 2, 3], np.ones((3, 2))), spec) == spec.actions[4]


def test_greedy_matches_exhaustive_scan(rng):
    torch.manual_seed(0)
    spec = make_spec(N=3, M=2, tau_cap=10)
    net = _qnet(spec)
    states = [SystemState(rng.integers(1, 11, 3), rng.integers(1, 3, (3, 2))) for _ in range(50)]
    picks = greedy_indices(net, states, spec)
    with torch.no_grad():
        q = net(states_to_tensor(states, spec)).numpy()
    for i in range(len(states)):
        best = max(range(6), key=lambda a: (q[i, a], -a))
        assert picks[i] == best


def test_pure_exploration_branch(rng):
    spec = make_spec(N=2, M=1)
    net = _qnet(spec)
    sched = ExplorationSchedule(epsilon=1.0, xi=1.0)
    state = SystemState([3, 2], [[1], [2]])
    seen = set()
    for select in (loose_se_action, tight_se_action):
        for _ in range(50):
            a, a_hat, a_tilde = select(net, state, sched, spec, rng)
            assert a_hat is None and is_valid_action(a, 2, 1)
            seen.add(a)
    assert seen == set(spec.actions)


def test_se_annotation_only_when_executed(rng):
    spec = make_spec(N=3, M=2, tau_cap=10)
    torch.manual_seed(3)
    net = _qnet(spec)
    sched = ExplorationSchedule(epsilon=0.0, xi=0.5)
    for _ in range(200):
        state = SystemState(rng.integers(1, 11, 3), rng.integers(1, 3, (3, 2)))
        for select in (loose_se_action, tight_se_action):
            a, a_hat, a_tilde = select(net, state, sched, spec, rng)
            assert is_valid_action(a, 3, 2)
            assert a_tilde == greedy_action(net, state, spec)
            if a_hat is not None:
                assert a_hat == a
            else:
                assert a == a_tilde


def _batch(spec, rng, se_fraction=0.5, B=16):
    batch = random_batch(spec.N, spec.M, B, rng)
    batch['se'] = torch.from_numpy(rng.random(B) < se_fraction)
    return batch


def test_alpha1_one_reduces_to_dqn_loss(rng):
    spec = make_spec(N=3, M=2)
    torch.manual_seed(4)
    net, target = _qnet(spec), _qnet(spec)
    batch = _batch(spec, rng)
    assert abs(se_loss(batch, net, target, 1.0, 0.95).item() - dqn_loss(batch, net, target, 0.95).item()) <= 1e-12


def test_no_se_records_ignore_alpha1(rng):
    spec = make_spec(N=3, M=2)
    torch.manual_seed(5)
    net, target = _qnet(spec), _qnet(spec)
    batch = _batch(spec, rng, se_fraction=0.0)
    base = dqn_loss(batch, net, target, 0.95).item()
    for alpha1 in (0.0, 0.3, 0.5):
        assert se_loss(batch, net, target, alpha1, 0.95).item() == base


def test_se_loss_gradient_small_batch(rng):
    spec = make_spec(N=2, M=1)
    torch.manual_seed(6)
    net, target = _qnet(spec), _qnet(spec)
    batch = _batch(spec, rng, B=4)
    batch['se'] = torch.tensor([True, False, True, False])
    _, grads = se_loss_and_grad(batch, net, target, 0.5, 0.95)
    errors = directional_gradcheck(lambda: se_loss(batch, net, target, 0.5, 0.95), net.parameters(), grads,
                                   n_dirs=100, generator=torch.Generator().manual_seed(6))
    assert max(errors) <= GRADCHECK_TOL


def test_target_network_receives_no_gradient(rng):
    spec = make_spec(N=2, M=1)
    net, target = _qnet(spec), _qnet(spec)
    se_loss_and_grad(_batch(spec, rng), net, target, 0.5, 0.95)
    assert all(p.grad is None for p in target.parameters())


def test_non_finite_loss(rng):
    spec = make_spec(N=2, M=1)
    net, target = _qnet(spec), _qnet(spec)
    batch = _batch(spec, rng)
    batch['r'][0] = float('nan')
    with pytest.raises(NonFiniteLoss):
        se_loss_and_grad(batch, net, target, 0.5, 0.95)


def test_training_is_deterministic(tiny_config):
    spec = make_spec(N=2, M=1, tau_cap=20)
    _, log_a = train_se_dqn(spec, tiny_config, seed=1, verbose=False)
    _, log_b = train_se_dqn(spec, tiny_config, seed=1, verbose=False)
    pd.testing.assert_frame_equal(log_a, log_b)
    assert list(log_a['stage']) == ['loose', 'tight', 'conventional']
    assert log_a['steps'].iloc[-1] == 3 * tiny_config.steps_per_episode


def test_zero_se_stages_is_conventional(tiny_config):
    spec = make_spec(N=2, M=1, tau_cap=20)
    config = tiny_config.for_agent('dqn')
    agent, log = train_se_dqn(spec, config, seed=1, verbose=False)
    assert set(log['stage']) == {CONVENTIONAL}
    assert not agent.memory.items('se').any()


def test_memory_annotations_are_consistent(tiny_config):
    spec = make_spec(N=2, M=1, tau_cap=20)
    agent, _ = train_se_dqn(spec, tiny_config, seed=2, verbose=False)
    se = agent.memory.items('se')
    a, a_hat = agent.memory.items('a'), agent.memory.items('a_hat')
    assert np.all(a[se] == a_hat[se])
    assert np.all(a_hat[~se] == -1)


def test_hard_target_sync(tiny_config):
    spec = make_spec(N=2, M=1, tau_cap=20)
    config = tiny_config.for_agent('se_dqn')
    config.target_update = 1
    agent = SEDQNAgent(spec, config, seed=0)
    agent.train(verbose=False)
    for t, o in zip(agent.target_net.parameters(), agent.qnet.parameters()):
        assert torch.equal(t, o)
