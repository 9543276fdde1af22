import itertools
import numpy as np
from dataclasses import dataclass
from functools import cached_property, lru_cache

from estimation.process import DEFAULT_TAU_CAP, mse_table
from estimation.channel import sample_channel_matrix, packet_delivered
from util.exceptions import DomainError, InvalidAction


@dataclass(frozen=True, eq=False)
class SystemState:
    '''
    MDP state s = (tau, H).

    :param tau: (N,) AoI per sensor, 1 <= tau_n <= tau_cap
    :param H: (N, M) channel states, 1 <= H[n, m] <= h_bar
    '''
    tau: np.ndarray
    H: np.ndarray

    def __post_init__(self):
        tau = np.array(self.tau, dtype=np.int64).reshape(-1)
        H = np.array(self.H, dtype=np.int64)
        if H.ndim != 2 or H.shape[0] != len(tau):
            raise DomainError(f'H must be (N={len(tau)}, M), got shape {H.shape}')
        tau.setflags(write=False)
        H.setflags(write=False)
        object.__setattr__(self, 'tau', tau)
        object.__setattr__(self, 'H', H)

    @property
    def N(self):
        return len(self.tau)

    @property
    def M(self):
        return self.H.shape[1]

    def key(self):
        return tuple(self.tau.tolist()), tuple(map(tuple, self.H.tolist()))

    def __eq__(self, other):
        return isinstance(other, SystemState) and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def __repr__(self):
        return f'SystemState(tau={self.tau.tolist()}, H={self.H.tolist()})'

    def with_tau(self, n, value):
        tau = self.tau.copy()
        tau[n] = value
        return SystemState(tau, self.H)

    def with_channel(self, n, m, value):
        '''m is 1-based.'''
        H = self.H.copy()
        H[n, m - 1] = value
        return SystemState(self.tau, H)


@dataclass(frozen=True)
class ScheduleAction:
    '''assign[n] = m schedules sensor n on channel m (1-based), 0 leaves it idle.'''
    assign: tuple

    def __post_init__(self):
        object.__setattr__(self, 'assign', tuple(int(a) for a in self.assign))

    def __iter__(self):
        return iter(self.assign)

    def __len__(self):
        return len(self.assign)

    def __getitem__(self, n):
        return self.assign[n]

    def sensor_on(self, m):
        '''0-based sensor index holding channel m, or None.'''
        for n, a in enumerate(self.assign):
            if a == m:
                return n
        return None


@dataclass(frozen=True, eq=False)
class MdpSpec:
    '''
    Discounted scheduling MDP.

    :param processes: N ProcessModel objects
    :param channels: ChannelModel over the same N sensors
    :param gamma: discount factor in [0, 1)
    :param tau_cap: AoI saturation level
    '''
    processes: tuple
    channels: object
    gamma: float = 0.95
    tau_cap: int = DEFAULT_TAU_CAP

    def __post_init__(self):
        object.__setattr__(self, 'processes', tuple(self.processes))
        if len(self.processes) != self.channels.N:
            raise DomainError(f'{len(self.processes)} processes for {self.channels.N} sensors')
        if not 0 <= self.gamma < 1:
            raise DomainError(f'gamma must be in [0, 1), got {self.gamma}')
        if self.tau_cap < 1:
            raise DomainError(f'tau_cap must be >= 1, got {self.tau_cap}')

    @property
    def N(self):
        return self.channels.N

    @property
    def M(self):
        return self.channels.M

    @property
    def h_bar(self):
        return self.channels.h_bar

    @cached_property
    def mse_tables(self):
        '''(N, tau_cap) array, entry [n, tau - 1] = Tr(f_n^tau(P_bar_n)).'''
        return np.stack([mse_table(p, self.tau_cap) for p in self.processes])

    @cached_property
    def actions(self):
        return enumerate_actions(self.N, self.M)

    @cached_property
    def action_index(self):
        return {a: i for i, a in enumerate(self.actions)}

    def replace(self, **kwargs):
        fields = dict(processes=self.processes, channels=self.channels,
                      gamma=self.gamma, tau_cap=self.tau_cap)
        fields.update(kwargs)
        return MdpSpec(**fields)


@lru_cache(maxsize=None)
def _enumerate_actions(N, M):
    actions = []
    # channel m goes to sensors[m - 1]; permutations come out in lexicographic order
    for sensors in itertools.permutations(range(N), M):
        assign = [0] * N
        for m, n in enumerate(sensors, start=1):
            assign[n] = m
        actions.append(ScheduleAction(assign))
    return tuple(actions)


def enumerate_actions(N, M):
    '''
    All N!/(N-M)! schedules that put every channel on a distinct sensor.
    Ordered lexicographically by the tuple (sensor on channel 1, ..., sensor on
    channel M); this order indexes the Q-network outputs.
    '''
    if not 1 <= M <= N:
        raise DomainError(f'need 1 <= M <= N, got N={N}, M={M}')
    return list(_enumerate_actions(N, M))


def is_valid_action(assign, N, M):
    assign = tuple(assign)
    if len(assign) != N or any(a < 0 or a > M for a in assign):
        return False
    used = [a for a in assign if a > 0]
    return len(used) == M and len(set(used)) == M


def satisfies_loose_constraint(assign, M):
    '''Each channel used at most once; channels may stay unused.'''
    used = [a for a in assign if a > 0]
    return all(0 <= a <= M for a in assign) and len(used) == len(set(used))


def validate_action(action, N, M):
    if not is_valid_action(action, N, M):
        raise InvalidAction(f'{tuple(action)} does not assign each of {M} channels to a distinct sensor')
    return action if isinstance(action, ScheduleAction) else ScheduleAction(action)


def validate_state(spec, state):
    if state.N != spec.N or state.M != spec.M:
        raise DomainError(f'state shape ({state.N}, {state.M}) does not match spec ({spec.N}, {spec.M})')
    if np.any(state.tau < 1) or np.any(state.tau > spec.tau_cap):
        raise DomainError(f'AoI {state.tau.tolist()} outside 1..{spec.tau_cap}')
    if np.any(state.H < 1) or np.any(state.H > spec.h_bar):
        raise DomainError(f'channel states outside 1..{spec.h_bar}')


def reward(spec, state):
    '''r(s) = -sum_n Tr(f_n^tau_n(P_bar_n)), AoI saturated at tau_cap.'''
    tau = np.minimum(state.tau, spec.tau_cap)
    return -float(spec.mse_tables[np.arange(spec.N), tau - 1].sum())


def next_aoi(tau, tau_cap):
    return min(tau + 1, tau_cap)


def step(spec, state, action, rng):
    '''
    Advance one slot: deliver each scheduled sensor's packet with probability
    1 - p_h, age everything else, redraw the channels.

    :return: (next state, r(state))
    '''
    action = validate_action(action, spec.N, spec.M)
    reward_now = reward(spec, state)
    tau_next = np.empty(spec.N, dtype=np.int64)
    for n, m in enumerate(action):
        if m > 0 and packet_delivered(spec.channels, int(state.H[n, m - 1]), rng):
            tau_next[n] = 1
        else:
            tau_next[n] = next_aoi(int(state.tau[n]), spec.tau_cap)
    H_next = sample_channel_matrix(spec.channels, rng)
    return SystemState(tau_next, H_next), reward_now


def transition_probability(spec, n, tau_n, H, a_n, tau_n_next):
    '''
    Pr(tau_n+ | tau_n, H, a_n) for sensor n (0-based):
        1 - p_{H[n, m]}  if tau_n+ = 1,          a_n = m
        p_{H[n, m]}      if tau_n+ = tau_n + 1,  a_n = m
        1                if tau_n+ = tau_n + 1,  a_n = 0
        0                otherwise
    with tau_n + 1 saturated at tau_cap.
    '''
    H = np.asarray(H)
    if not 0 <= n < spec.N:
        raise DomainError(f'sensor index {n} outside 0..{spec.N - 1}')
    if not 1 <= tau_n <= spec.tau_cap or not 1 <= tau_n_next <= spec.tau_cap:
        raise DomainError(f'AoI outside 1..{spec.tau_cap}')
    if not 0 <= a_n <= spec.M:
        raise DomainError(f'action {a_n} outside 0..{spec.M}')
    if H.shape != (spec.N, spec.M) or np.any(H < 1) or np.any(H > spec.h_bar):
        raise DomainError('malformed channel matrix')
    aged = next_aoi(tau_n, spec.tau_cap)
    if a_n == 0:
        return 1.0 if tau_n_next == aged else 0.0
    p_drop = float(spec.channels.drop_prob[H[n, a_n - 1] - 1])
    prob = 0.0
    if tau_n_next == 1:
        prob += 1.0 - p_drop
    if tau_n_next == aged:
        prob += p_drop
    return prob


def initial_state(spec, rng):
    '''All-fresh estimates, tau = 1, with a freshly drawn channel matrix.'''
    return SystemState(np.ones(spec.N, dtype=np.int64), sample_channel_matrix(spec.channels, rng))


def discounted_return(spec, policy, state, rng, horizon=None, tol=1e-6):
    '''
    One Monte Carlo sample of sum_t gamma^t r(s_t) under policy from state.
    The horizon defaults to the first t with gamma^t < tol.
    '''
    if horizon is None:
        horizon = 1 if spec.gamma == 0 else int(np.ceil(np.log(tol) / np.log(spec.gamma)))
    total, discount = 0.0, 1.0
    for _ in range(horizon):
        state, r = step(spec, state, policy(state), rng)
        total += discount * r
        discount *= spec.gamma
    return total


class SchedulingEnv:
    '''
    Stateful wrapper around step() that owns its random source.
    One instance per thread; parallel runs create their own.
    '''
    def __init__(self, spec, seed=None, rng=None):
        self.spec = spec
        self.rng = rng if rng is not None else np.random.default_rng(seed)
        self.state = None

    @property
    def actions(self):
        return self.spec.actions

    def reset(self):
        self.state = initial_state(self.spec, self.rng)
        return self.state

    def step(self, action):
        assert self.state is not None, 'Call reset() before step()'
        self.state, r = step(self.spec, self.state, action, self.rng)
        return self.state, r
