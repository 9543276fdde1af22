import itertools
import numpy as np
import pytest

from estimation.channel import ChannelModel
from env.mdp import (SystemState, ScheduleAction, MdpSpec, SchedulingEnv, enumerate_actions, is_valid_action,
                     satisfies_loose_constraint, validate_state, reward, step, transition_probability,
                     initial_state, discounted_return)
from util.exceptions import DomainError, InvalidAction
from conftest import scalar_process, make_spec


def test_enumerate_small():
    assert [tuple(a) for a in enumerate_actions(2, 1)] == [(1, 0), (0, 1)]


def test_enumerate_counts_and_validity():
    assert len(enumerate_actions(6, 3)) == 120
    actions = enumerate_actions(3, 2)
    assert len(actions) == 6
    assert len(set(actions)) == 6
    assert all(is_valid_action(a, 3, 2) for a in actions)


def test_enumerate_rejects_too_many_channels():
    with pytest.raises(DomainError):
        enumerate_actions(2, 3)


def test_action_constraints():
    assert is_valid_action((2, 0, 1), 3, 2)
    assert not is_valid_action((1, 0, 1), 3, 2)
    assert not is_valid_action((1, 0, 0), 3, 2)
    assert satisfies_loose_constraint((1, 0, 0), 2)
    assert not satisfies_loose_constraint((1, 1, 0), 2)
    assert ScheduleAction((2, 0, 1)).sensor_on(1) == 2
    assert ScheduleAction((2, 0, 1)).sensor_on(3) is None


def test_state_equality_and_hash():
    a = SystemState([1, 2], [[1], [2]])
    b = SystemState(np.array([1, 2]), np.array([[1], [2]]))
    assert a == b and hash(a) == hash(b)
    assert a.with_tau(0, 3) == SystemState([3, 2], [[1], [2]])
    assert a.with_channel(1, 1, 1) == SystemState([1, 2], [[1], [1]])
    assert a.tau.tolist() == [1, 2]


def test_reward_examples():
    spec1 = MdpSpec([scalar_process()], ChannelModel.uniform(1, 1))
    assert reward(spec1, SystemState([1], [[1]])) == -5.0
    spec2 = make_spec(N=2, M=1)
    assert reward(spec2, SystemState([1, 2], [[1], [1]])) == -26.0


def test_reward_ignores_channels():
    spec = make_spec(N=2, M=1)
    assert reward(spec, SystemState([2, 3], [[1], [1]])) == reward(spec, SystemState([2, 3], [[2], [2]]))


def test_reward_monotone_in_aoi():
    spec = make_spec(N=2, M=1, processes=[scalar_process(1.3), scalar_process(1.1)])
    H = [[1], [1]]
    for t1, t2, u1, u2 in itertools.product(range(1, 11), repeat=4):
        if t1 <= u1 and t2 <= u2:
            assert reward(spec, SystemState([t1, t2], H)) >= reward(spec, SystemState([u1, u2], H))


def test_step_with_lossless_channel(rng):
    spec = make_spec(N=3, M=2, drop_prob=(0.0,))
    state = SystemState([4, 5, 6], np.ones((3, 2)))
    nxt, r = step(spec, state, (2, 0, 1), rng)
    assert nxt.tau.tolist() == [1, 6, 1]
    assert r == reward(spec, state)


def test_step_with_dead_channel_saturates(rng):
    spec = make_spec(N=2, M=1, drop_prob=(1.0,), tau_cap=5)
    state = SystemState([5, 2], [[1], [1]])
    nxt, _ = step(spec, state, (1, 0), rng)
    assert nxt.tau.tolist() == [5, 3]


def test_step_rejects_invalid_action(rng):
    spec = make_spec(N=2, M=1)
    with pytest.raises(InvalidAction):
        step(spec, SystemState([1, 1], [[1], [1]]), (1, 1), rng)


def test_delivery_frequency_matches_kernel(rng):
    spec = make_spec(N=1, M=1, drop_prob=(0.2, 0.01), processes=[scalar_process()],
                     dist=np.array([[[1.0, 0.0]]]))
    state = SystemState([3], [[1]])
    n = 20000
    fresh = sum(step(spec, state, (1,), rng)[0].tau[0] == 1 for _ in range(n))
    expected = transition_probability(spec, 0, 3, [[1]], 1, 1)
    assert expected == pytest.approx(0.8)
    assert abs(fresh / n - expected) <= 0.01


def test_transition_kernel_cases():
    spec = make_spec(N=2, M=1, drop_prob=(0.2, 0.15, 0.1, 0.05, 0.01))
    H = [[5], [1]]
    assert transition_probability(spec, 0, 3, H, 0, 4) == 1.0
    assert transition_probability(spec, 0, 3, H, 0, 1) == 0.0
    assert transition_probability(spec, 0, 3, H, 1, 1) == pytest.approx(0.99)
    assert transition_probability(spec, 0, 3, H, 1, 4) == pytest.approx(0.01)
    assert transition_probability(spec, 0, 3, H, 1, 2) == 0.0


def test_transition_kernel_normalized():
    spec = make_spec(N=2, M=2, drop_prob=(0.2, 0.01), tau_cap=6)
    for tau, h1, h2, a in itertools.product(range(1, 7), (1, 2), (1, 2), (0, 1, 2)):
        H = [[h1, h2], [h2, h1]]
        support = {1, min(tau + 1, spec.tau_cap)}
        total = sum(transition_probability(spec, 1, tau, H, a, t) for t in support)
        assert total == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize('args', [
    (2, 1, [[1], [1]], 0, 2),      # sensor out of range
    (0, 0, [[1], [1]], 0, 1),      # AoI below 1
    (0, 1, [[1], [1]], 2, 1),      # channel out of range
    (0, 1, [[3], [1]], 1, 1),      # channel state out of range
])
def test_transition_kernel_domain(args):
    with pytest.raises(DomainError):
        transition_probability(make_spec(N=2, M=1), *args)


def test_validate_state():
    spec = make_spec(N=2, M=1, tau_cap=5)
    validate_state(spec, SystemState([5, 1], [[2], [1]]))
    with pytest.raises(DomainError):
        validate_state(spec, SystemState([6, 1], [[2], [1]]))
    with pytest.raises(DomainError):
        validate_state(spec, SystemState([1, 1], [[3], [1]]))


def test_initial_state_is_fresh(rng):
    spec = make_spec(N=3, M=2)
    s = initial_state(spec, rng)
    assert s.tau.tolist() == [1, 1, 1]
    assert s.H.shape == (3, 2)


def test_discounted_return_myopic(rng):
    spec = make_spec(N=2, M=1, gamma=0.0)
    state = SystemState([2, 3], [[1], [2]])
    assert discounted_return(spec, lambda s: (1, 0), state, rng) == reward(spec, state)


def test_env_is_deterministic_in_seed():
    spec = make_spec(N=2, M=1)
    traces = []
    for _ in range(2):
        env = SchedulingEnv(spec, seed=9)
        s = env.reset()
        trace = [s]
        for k in range(50):
            s, _ = env.step(env.actions[k % 2])
            trace.append(s)
        traces.append(trace)
    assert traces[0] == traces[1]


def test_joint_aoi_transition_factorizes(rng):
    spec = make_spec(N=2, M=2, drop_prob=(0.5, 0.2), tau_cap=10)
    state = SystemState([3, 5], [[1, 2], [2, 2]])
    action = (1, 2)
    n = 40000
    counts = {}
    for _ in range(n):
        tau_next = tuple(int(t) for t in step(spec, state, action, rng)[0].tau)
        counts[tau_next] = counts.get(tau_next, 0) + 1
    support = list(itertools.product((1, 4), (1, 6)))
    assert set(counts) <= set(support)
    for tau_next in support:
        expected = np.prod([transition_probability(spec, k, int(state.tau[k]), state.H, action[k], tau_next[k])
                            for k in range(spec.N)])
        assert abs(counts.get(tau_next, 0) / n - expected) <= 0.01
