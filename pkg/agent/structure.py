'''
Structure-enhanced (SE) action inference shared by the DQN and DDPG agents.

Both agents expose "the greedy schedule at a state" as a function over a list
of states; the inference below only ever asks for that.
'''
import numpy as np
import torch
from dataclasses import dataclass

from env.mdp import ScheduleAction, is_valid_action, satisfies_loose_constraint

LOOSE, TIGHT, CONVENTIONAL = 'loose', 'tight', 'conventional'


@dataclass
class ExplorationSchedule:
    '''
    epsilon and xi decay multiplicatively once per environment step down to
    floor; sigma is the DDPG Gaussian noise scale on the same footing.
    '''
    epsilon: float = 1.0
    xi: float = 1.0
    decay: float = 0.999
    floor: float = 0.01
    sigma: float = 0.3
    sigma_decay: float = 0.999
    sigma_floor: float = 0.01

    def step(self):
        self.epsilon = max(self.epsilon * self.decay, self.floor)
        self.xi = max(self.xi * self.decay, self.floor)
        self.sigma = max(self.sigma * self.sigma_decay, self.sigma_floor)


def stage_for(episode, loose_episodes, tight_episodes):
    '''Training stage of a 1-based episode number.'''
    if episode <= loose_episodes:
        return LOOSE
    if episode <= loose_episodes + tight_episodes:
        return TIGHT
    return CONVENTIONAL


def state_to_input(state, spec):
    '''
    Network features: tau_n / tau_cap for each sensor, then (h - 1) / (h_bar - 1)
    over H row-major. A single-level channel maps to 0.
    '''
    aoi = state.tau.astype(np.float64) / spec.tau_cap
    scale = max(spec.h_bar - 1, 1)
    chan = (state.H.reshape(-1).astype(np.float64) - 1.0) / scale
    return np.concatenate([aoi, chan])


def states_to_tensor(states, spec):
    return torch.from_numpy(np.stack([state_to_input(s, spec) for s in states]))


def random_action(spec, rng):
    return spec.actions[rng.integers(len(spec.actions))]


def loose_candidate(state, greedy_fn, a_tilde, xi, spec, rng):
    '''
    Per-sensor SE inference from AoI-decremented neighbours.

    For each sensor n with tau_n > 1, the greedy schedule at the state with
    tau_n - 1 assigns some channel m to n. A larger AoI should get channel m or
    better, so with probability xi a strictly better channel (if any) is tried,
    otherwise m is kept. Sensors that are idle at the neighbour, or have no
    neighbour (tau_n = 1), fall back to the greedy choice at the state itself.

    :return: list assign, possibly violating any channel constraint
    '''
    sensors = [n for n in range(spec.N) if state.tau[n] > 1]
    a_hat = list(a_tilde)
    if not sensors:
        return a_hat
    neighbours = [state.with_tau(n, int(state.tau[n]) - 1) for n in sensors]
    for n, a_dot in zip(sensors, greedy_fn(neighbours)):
        m = a_dot[n]
        if m == 0:
            continue
        better = [k for k in range(1, spec.M + 1) if state.H[n, k - 1] > state.H[n, m - 1]]
        if better and rng.random() < xi:
            a_hat[n] = better[rng.integers(len(better))]
        else:
            a_hat[n] = m
    return a_hat


def complete_schedule(assign, spec, rng):
    '''Hands every unused channel to a distinct idle sensor, uniformly at random.'''
    assign = list(assign)
    unused = [m for m in range(1, spec.M + 1) if m not in assign]
    if unused:
        idle = [n for n in range(spec.N) if assign[n] == 0]
        chosen = rng.permutation(idle)[:len(unused)]
        for n, m in zip(chosen, unused):
            assign[int(n)] = m
    return ScheduleAction(assign)


def tight_filter(state, a_hat, a_tilde, greedy_fn, spec):
    '''
    Keeps a_hat[n] = m only if the greedy schedule at the state with H[n, m]
    lowered by one also gives m to n; otherwise falls back to a_tilde[n].
    Bottom channel states (H[n, m] = 1) have no lower neighbour and pass.
    '''
    a_hat = list(a_hat)
    checks = [(n, m) for n, m in enumerate(a_hat) if m > 0 and state.H[n, m - 1] > 1]
    if not checks:
        return a_hat
    neighbours = [state.with_channel(n, m, int(state.H[n, m - 1]) - 1) for n, m in checks]
    for (n, m), a_ddot in zip(checks, greedy_fn(neighbours)):
        if a_ddot[n] != m:
            a_hat[n] = a_tilde[n]
    return a_hat


def se_schedule(state, stage, greedy_fn, a_tilde, xi, spec, rng):
    '''
    Runs the loose or tight inference and resolves it to an executable schedule.

    :return: the SE schedule to execute, or None when the stage's constraint
        rejects the candidate
    '''
    a_hat = loose_candidate(state, greedy_fn, a_tilde, xi, spec, rng)
    if stage == LOOSE:
        if satisfies_loose_constraint(a_hat, spec.M):
            return complete_schedule(a_hat, spec, rng)
        return None
    a_hat = tight_filter(state, a_hat, a_tilde, greedy_fn, spec)
    if is_valid_action(a_hat, spec.N, spec.M):
        return ScheduleAction(a_hat)
    return None
