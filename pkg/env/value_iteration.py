import json
import itertools
import numpy as np
import pandas as pd
from collections.abc import Mapping
from dataclasses import dataclass, field

from env.mdp import SystemState
from util.exceptions import CapacityError, IncompletePolicy, NonConvergence

MAX_VI_STATES = 10 ** 7


def state_space_size(spec):
    return spec.tau_cap ** spec.N * spec.h_bar ** (spec.N * spec.M)


def iter_states(spec):
    '''Every state of the truncated MDP, in C order of the value table.'''
    N, M = spec.N, spec.M
    for idx in np.ndindex(*_table_shape(spec)):
        tau = np.array(idx[:N]) + 1
        H = (np.array(idx[N:]) + 1).reshape(N, M)
        yield SystemState(tau, H)


def _table_shape(spec):
    return (spec.tau_cap,) * spec.N + (spec.h_bar,) * (spec.N * spec.M)


def _state_index(spec, state):
    tau = np.minimum(state.tau, spec.tau_cap) - 1
    return tuple(tau.tolist()) + tuple((state.H.reshape(-1) - 1).tolist())


class _BellmanOperator:
    '''
    Vectorized Bellman backup over the full (tau, H) table.

    The next channel matrix is independent of everything else, so
    E[V(tau', H')] collapses to W(tau') by contracting each H axis with its
    categorical distribution; per-sensor delivery outcomes then index W.
    '''
    def __init__(self, spec):
        self.spec = spec
        N, M, h_bar, cap = spec.N, spec.M, spec.h_bar, spec.tau_cap
        self.shape = _table_shape(spec)
        tau_axes = (cap,) * N

        R = np.zeros(tau_axes)
        for n in range(N):
            bshape = [1] * N
            bshape[n] = cap
            R = R - spec.mse_tables[n].reshape(bshape)
        self.R = R.reshape(tau_axes + (1,) * (N * M))

        self.aged_idx = np.minimum(np.arange(cap) + 1, cap - 1)
        self.patterns = list(itertools.product((False, True), repeat=N))

        # success[a][n]: delivery probability of sensor n under action a, broadcast over H axes
        success_prob = 1.0 - spec.channels.drop_prob
        self.success = []
        for action in spec.actions:
            per_sensor = []
            for n, m in enumerate(action):
                if m == 0:
                    per_sensor.append(None)
                    continue
                bshape = [1] * (N + N * M)
                bshape[N + n * M + (m - 1)] = h_bar
                per_sensor.append(success_prob.reshape(bshape))
            self.success.append(per_sensor)

    def expected_next(self, V):
        N, M = self.spec.N, self.spec.M
        W = V
        for n in reversed(range(N)):
            for m in reversed(range(M)):
                W = np.tensordot(W, self.spec.channels.dist[n, m], axes=([-1], [0]))
        return W

    def _pattern_tables(self, W):
        N = self.spec.N
        tables = {}
        for pattern in self.patterns:
            X = W
            for n, delivered in enumerate(pattern):
                if delivered:
                    X = np.take(X, [0], axis=n)
                else:
                    X = np.take(X, self.aged_idx, axis=n)
            tables[pattern] = X.reshape(X.shape + (1,) * (N * self.spec.M))
        return tables

    def q_values(self, V):
        '''(|A|,) + table shape array of Q(s, a).'''
        spec = self.spec
        tables = self._pattern_tables(self.expected_next(V))
        Q = np.empty((len(spec.actions),) + self.shape)
        for i, per_sensor in enumerate(self.success):
            cont = np.zeros(self.shape)
            for pattern, table in tables.items():
                if any(d and s is None for d, s in zip(pattern, per_sensor)):
                    continue
                weight = 1.0
                for d, s in zip(pattern, per_sensor):
                    if s is not None:
                        weight = weight * (s if d else 1.0 - s)
                cont = cont + weight * table
            Q[i] = self.R + spec.gamma * cont
        return Q


@dataclass
class ValueIterationResult:
    '''
    Converged value table and greedy policy of the truncated MDP.

    values and policy are arrays over (tau_1..tau_N, H_11..H_NM), zero-based.
    The result is callable as a policy; AoI above the truncation level is
    clamped to it.
    '''
    spec: object
    values: np.ndarray
    policy: np.ndarray
    residual: float
    iterations: int
    history: list = field(default_factory=list)

    def value(self, state):
        return float(self.values[_state_index(self.spec, state)])

    def action_index(self, state):
        return int(self.policy[_state_index(self.spec, state)])

    def action(self, state):
        return self.spec.actions[self.action_index(state)]

    def __call__(self, state):
        return self.action(state)

    def values_map(self):
        return {s: self.value(s) for s in iter_states(self.spec)}

    def policy_map(self):
        return {s: self.action(s) for s in iter_states(self.spec)}


def value_iteration(spec, tol=1e-8, max_iters=100000, max_states=MAX_VI_STATES, verbose=False):
    '''
    Synchronous (Jacobi) value iteration on the truncated MDP of spec.

    Stops once ||T V - V||_inf <= tol and returns T V with its greedy policy;
    ties go to the lowest action index.

    :raises CapacityError: if the table would exceed max_states entries
    :raises NonConvergence: if tol is not reached in max_iters sweeps
    '''
    n_states = state_space_size(spec)
    if n_states > max_states:
        raise CapacityError(f'{n_states} states exceed the value iteration bound of {max_states}')
    op = _BellmanOperator(spec)
    V = np.zeros(op.shape)
    history = []
    for it in range(1, max_iters + 1):
        V_next = op.q_values(V).max(axis=0)
        delta = float(np.max(np.abs(V_next - V)))
        V = V_next
        history.append(delta)
        if verbose and it % 100 == 0:
            print(f'VI sweep {it}: residual={delta:.3e}')
        if delta <= tol:
            break
    else:
        raise NonConvergence(f'value iteration residual {delta:.3e} above {tol} after {max_iters} sweeps')
    Q = op.q_values(V)
    policy = Q.argmax(axis=0)
    residual = float(np.max(np.abs(Q.max(axis=0) - V)))
    if verbose:
        print(f'VI converged in {it} sweeps, residual={residual:.3e}, states={n_states}')
    return ValueIterationResult(spec, V, policy, residual, it, history)


def bellman_residual(spec, values):
    '''||T V - V||_inf for an arbitrary value table.'''
    op = _BellmanOperator(spec)
    return float(np.max(np.abs(op.q_values(values).max(axis=0) - values)))


def _state_record(state):
    return {'tau': state.tau.tolist(), 'H': state.H.tolist()}


def check_threshold_structure(policy, spec):
    '''
    Exhaustive check of the threshold properties on the truncated state space.
    For every state where sensor n holds channel m:
      (i)  raising only H[n, m] keeps channel m on sensor n;
      (ii) raising only tau_n gives sensor n a channel m' with H[n, m'] >= H[n, m].
    Perturbations that leave the truncated space are skipped; an idle outcome
    under (ii) is a violation.

    :param policy: ValueIterationResult or mapping SystemState -> ScheduleAction
    :return: list of violation records, empty iff the policy is threshold-structured
    '''
    if isinstance(policy, ValueIterationResult):
        lookup = policy.policy_map()
    elif isinstance(policy, Mapping):
        lookup = policy
    else:
        lookup = {s: policy(s) for s in iter_states(spec)}

    states = list(iter_states(spec))
    missing = [s for s in states if s not in lookup]
    if missing:
        raise IncompletePolicy(f'{len(missing)} states unmapped, e.g. {missing[0]}')

    violations = []
    for state in states:
        action = lookup[state]
        for n, m in enumerate(action):
            if m == 0:
                continue
            h = int(state.H[n, m - 1])
            if h < spec.h_bar:
                perturbed = state.with_channel(n, m, h + 1)
                got = lookup[perturbed][n]
                if got != m:
                    violations.append({'state': _state_record(state), 'perturbed': _state_record(perturbed),
                                       'sensor': n + 1, 'property': 'i', 'assigned': got, 'expected': [m]})
            if state.tau[n] < spec.tau_cap:
                perturbed = state.with_tau(n, int(state.tau[n]) + 1)
                got = lookup[perturbed][n]
                acceptable = [k for k in range(1, spec.M + 1) if state.H[n, k - 1] >= h]
                if got not in acceptable:
                    violations.append({'state': _state_record(state), 'perturbed': _state_record(perturbed),
                                       'sensor': n + 1, 'property': 'ii', 'assigned': got,
                                       'expected': acceptable})
    return violations


def write_threshold_report(violations, path):
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        json.dump(violations, f, indent=2)


def policy_map_frame(result):
    '''One row per state: AoI, channel states, greedy action index and assignment.'''
    spec = result.spec
    rows = []
    for state in iter_states(spec):
        row = {f'tau_{n + 1}': int(t) for n, t in enumerate(state.tau)}
        for n in range(spec.N):
            for m in range(spec.M):
                row[f'h_{n + 1}_{m + 1}'] = int(state.H[n, m])
        idx = result.action_index(state)
        row['action_index'] = idx
        row['assign'] = ' '.join(str(a) for a in spec.actions[idx])
        row['value'] = result.value(state)
        rows.append(row)
    return pd.DataFrame(rows)


def write_policy_csv(result, path):
    policy_map_frame(result).to_csv(path, index=False, lineterminator='\n')
