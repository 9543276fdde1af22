import copy
import numpy as np
import torch
from typing import NamedTuple, Optional

from env.mdp import SystemState, ScheduleAction
from model import load_model
from model.mlp import sync_target
from agent.base import Agent
from agent.replay import ReplayMemory
from agent.structure import (LOOSE, TIGHT, CONVENTIONAL, state_to_input, states_to_tensor,
                             random_action, se_schedule)
from util.optim import build_optimizer, adam_step
from util.exceptions import NonFiniteLoss


class TransitionRecord(NamedTuple):
    '''
    (s, a, a_hat, a_tilde, r, s_next). a_hat is None unless the SE schedule
    was the one executed, in which case it equals a.
    '''
    s: SystemState
    a: ScheduleAction
    a_hat: Optional[ScheduleAction]
    a_tilde: ScheduleAction
    r: float
    s_next: SystemState


@torch.no_grad()
def greedy_indices(qnet, states, spec):
    '''argmax_a Q(s, a) per state; ties go to the lowest action index.'''
    q = qnet(states_to_tensor(states, spec)).numpy()
    return np.argmax(q, axis=-1)


def greedy_action(qnet, state, spec):
    return spec.actions[int(greedy_indices(qnet, [state], spec)[0])]


def _greedy_fn(qnet, spec):
    return lambda states: [spec.actions[int(i)] for i in greedy_indices(qnet, states, spec)]


def epsilon_greedy_action(qnet, state, sched, spec, rng):
    '''Conventional DQN selection: (executed, None, greedy).'''
    a_tilde = greedy_action(qnet, state, spec)
    if rng.random() < sched.epsilon:
        return random_action(spec, rng), None, a_tilde
    return a_tilde, None, a_tilde


def _se_action(qnet, state, sched, spec, rng, stage):
    a_tilde = greedy_action(qnet, state, spec)
    if rng.random() < sched.epsilon:
        return random_action(spec, rng), None, a_tilde
    a_hat = se_schedule(state, stage, _greedy_fn(qnet, spec), a_tilde, sched.xi, spec, rng)
    if a_hat is None:
        return a_tilde, None, a_tilde
    return a_hat, a_hat, a_tilde


def loose_se_action(qnet, state, sched, spec, rng):
    '''
    Loose SE selection. With probability epsilon a uniform random schedule;
    otherwise the AoI-neighbour inference, executed (after random completion of
    unused channels) when no channel is used twice, else the greedy schedule.

    :return: (executed a, a_hat or None, greedy a_tilde)
    '''
    return _se_action(qnet, state, sched, spec, rng, LOOSE)


def tight_se_action(qnet, state, sched, spec, rng):
    '''
    Tight SE selection: the loose inference filtered by the channel-neighbour
    check, executed only if it is already a complete schedule.

    :return: (executed a, a_hat or None, greedy a_tilde)
    '''
    return _se_action(qnet, state, sched, spec, rng, TIGHT)


def td_errors(batch, qnet, target_net, gamma):
    q = qnet(batch['s'])
    q_sa = q.gather(1, batch['a'][:, None]).squeeze(1)
    with torch.no_grad():
        y = batch['r'] + gamma * target_net(batch['s_next']).max(dim=1).values
    return y - q_sa, q


def dqn_loss(batch, qnet, target_net, gamma):
    '''Conventional DQN loss, mean squared TD error.'''
    td, _ = td_errors(batch, qnet, target_net, gamma)
    return (td ** 2).mean()


def se_loss(batch, qnet, target_net, alpha1, gamma):
    '''
    Mean over the batch of
        alpha1 * TD^2 + (1 - alpha1) * AD^2   when the SE schedule was executed,
        TD^2                                  otherwise,
    with TD = r + gamma * max_a Q_target(s', a) - Q(s, a) (target held constant)
    and  AD = Q(s, a_hat) - Q(s, a_tilde).
    '''
    td, q = td_errors(batch, qnet, target_net, gamma)
    se = batch['se']
    hat = torch.where(se, batch['a_hat'], batch['a_tilde'])
    ad = (q.gather(1, hat[:, None]) - q.gather(1, batch['a_tilde'][:, None])).squeeze(1)
    per_record = torch.where(se, alpha1 * td ** 2 + (1.0 - alpha1) * ad ** 2, td ** 2)
    return per_record.mean()


def se_loss_and_grad(batch, qnet, target_net, alpha1, gamma):
    '''
    :return: (loss value, gradients in qnet.parameters() order)
    :raises NonFiniteLoss: on NaN/Inf loss
    '''
    assert len(batch['r']) > 0, 'Empty batch'
    loss = se_loss(batch, qnet, target_net, alpha1, gamma)
    if not torch.isfinite(loss):
        raise NonFiniteLoss(f'SE-DQN loss is {loss.item()}')
    grads = torch.autograd.grad(loss, list(qnet.parameters()))
    return loss.item(), grads


def dqn_layout(spec):
    d = spec.N + spec.N * spec.M
    return {
        's': ((d,), np.float64),
        'a': ((), np.int64),
        'a_hat': ((), np.int64),
        'a_tilde': ((), np.int64),
        'se': ((), np.bool_),
        'r': ((), np.float64),
        's_next': ((d,), np.float64),
    }


class SEDQNAgent(Agent):
    '''
    SE-DQN. Loose and tight SE stages followed by conventional epsilon-greedy
    DQN; with both SE stages empty this is plain DQN.
    '''
    def __init__(self, spec, config, seed=0, hidden=None):
        super(SEDQNAgent, self).__init__(spec, config, seed)
        torch.manual_seed(seed)
        hidden = tuple(hidden or config.hidden)
        self.qnet = load_model('qnet', N=spec.N, M=spec.M, n_actions=len(spec.actions), hidden=hidden)
        self.target_net = copy.deepcopy(self.qnet)
        self.optimizer, self.scheduler = build_optimizer(self.qnet.parameters(), config.lr, config.lr_decay)
        self.memory = ReplayMemory(config.replay_size, dqn_layout(spec))

    def networks(self):
        return {'qnet': self.qnet}

    def optimizers(self):
        return {'qnet': self.optimizer}

    def schedulers(self):
        return {'qnet': self.scheduler}

    def act(self, state, stage):
        if stage == LOOSE:
            return loose_se_action(self.qnet, state, self.schedule, self.spec, self.rng)
        if stage == TIGHT:
            return tight_se_action(self.qnet, state, self.schedule, self.spec, self.rng)
        assert stage == CONVENTIONAL, f'Unknown stage {stage}'
        return epsilon_greedy_action(self.qnet, state, self.schedule, self.spec, self.rng)

    def act_greedy(self, state):
        return greedy_action(self.qnet, state, self.spec)

    def remember(self, state, executed, annotation, greedy, r, next_state):
        index = self.spec.action_index
        self.memory.push(s=state_to_input(state, self.spec),
                         a=index[executed],
                         a_hat=-1 if annotation is None else index[annotation],
                         a_tilde=index[greedy],
                         se=annotation is not None,
                         r=r,
                         s_next=state_to_input(next_state, self.spec))

    def update(self):
        if len(self.memory) < self.config.batch_size:
            return
        batch = self.memory.sample(self.config.batch_size, self.rng)
        loss, grads = se_loss_and_grad(batch, self.qnet, self.target_net, self.config.alpha1, self.config.gamma)
        adam_step(self.optimizer, self.qnet.parameters(), grads)
        self.metrics['loss'].update_state(loss)

    def after_step(self):
        if self.total_steps % self.config.target_update == 0:
            sync_target(self.target_net, self.qnet, 1.0)


def train_se_dqn(spec, config, seed=0, ckpt_dir=None, log_fn=None, verbose=True):
    '''
    :return: (trained agent, per-episode training log DataFrame)
    '''
    agent = SEDQNAgent(spec, config, seed)
    log = agent.train(ckpt_dir=ckpt_dir, log_fn=log_fn, verbose=verbose)
    return agent, log
