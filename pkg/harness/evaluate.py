import numpy as np
import pandas as pd
import torch
from tqdm import tqdm

from env.mdp import initial_state, step, validate_action
from env.value_iteration import ValueIterationResult
from model import MLP
from agent.dqn import greedy_action
from agent.ddpg import actor_outputs, map_virtual_to_schedule
from util.utils import load_checkpoint
from util.exceptions import ConfigError

TRACE_COLUMNS = ['step', 'sum_mse']


def evaluate_policy(policy, spec, steps=10000, seed=0, verbose=False):
    '''
    Rolls a fixed policy forward from the all-ones AoI state.

    :param policy: callable SystemState -> ScheduleAction (assignment tuple)
    :return: (average per-step sum MSE, per-step trace DataFrame)
    '''
    rng = np.random.default_rng(seed)
    state = initial_state(spec, rng)
    costs = np.empty(steps)
    for k in tqdm(range(steps), disable=not verbose):
        action = validate_action(policy(state), spec.N, spec.M)
        state, r = step(spec, state, action, rng)
        costs[k] = -r
    trace = pd.DataFrame({'step': np.arange(1, steps + 1), 'sum_mse': costs}, columns=TRACE_COLUMNS)
    return float(costs.mean()), trace


class RoundRobinPolicy:
    '''
    Step k schedules sensors kM, ..., kM + M - 1 (mod N) on channels 1..M,
    ignoring the state. Stateful; build a fresh one per rollout.
    '''
    def __init__(self, spec):
        self.N, self.M = spec.N, spec.M
        self.k = 0

    def __call__(self, state):
        assign = [0] * self.N
        for m in range(self.M):
            assign[(self.k * self.M + m) % self.N] = m + 1
        self.k += 1
        return tuple(assign)


def round_robin_policy(spec):
    return RoundRobinPolicy(spec)


def fixed_policy(spec, action):
    '''Always the same schedule.'''
    action = validate_action(action, spec.N, spec.M)
    return lambda state: action


class NetworkPolicy:
    '''Greedy schedule of a trained Q-network or actor.'''
    def __init__(self, net, spec, kind):
        assert kind in ('qnet', 'actor'), f'Unknown network kind {kind}'
        self.net, self.spec, self.kind = net, spec, kind

    def __call__(self, state):
        if self.kind == 'qnet':
            return greedy_action(self.net, state, self.spec)
        return map_virtual_to_schedule(actor_outputs(self.net, [state], self.spec)[0], self.spec)


def load_value_iteration(path, spec):
    '''
    Policy table saved by a value iteration run. The truncation level is read
    off the table; AoI above it is clamped when the policy is queried.

    :raises ConfigError: if the table does not fit spec's N, M and channel levels
    '''
    with np.load(path) as data:
        values, policy = data['values'], data['policy']
        residual, iterations = float(data['residual']), int(data['iterations'])
        stored = (int(data['N']), int(data['M']))
    N, M = spec.N, spec.M
    if stored != (N, M) or policy.ndim != N + N * M or set(policy.shape[N:]) != {spec.h_bar}:
        raise ConfigError(f'value iteration table {path} of shape {policy.shape} does not fit '
                          f'N={N}, M={M}, h_bar={spec.h_bar}')
    vi_spec = spec.replace(tau_cap=policy.shape[0])
    return ValueIterationResult(vi_spec, values, policy, residual, iterations)


def load_policy(path, spec, verbose=False):
    '''
    Rebuilds the greedy policy stored in a checkpoint: a network checkpoint
    from a learning run, or the .npz table of a value iteration run.

    :raises ConfigError: if the checkpoint was trained for another N or M
    '''
    if str(path).endswith('.npz'):
        return load_value_iteration(path, spec)
    checkpoint = torch.load(path, map_location=torch.device('cpu'), weights_only=False)
    if (checkpoint.get('N'), checkpoint.get('M')) != (spec.N, spec.M):
        raise ConfigError(f'checkpoint {path} is for N={checkpoint.get("N")}, M={checkpoint.get("M")}')
    kind = 'qnet' if 'qnet' in checkpoint['layer_dims'] else 'actor'
    dims = checkpoint['layer_dims'][kind]
    net = MLP(dims, squash_output=(kind == 'actor'))
    load_checkpoint(path, networks={kind: net}, verbose=verbose)
    net.eval()
    return NetworkPolicy(net, spec, kind)
