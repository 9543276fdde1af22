import copy
import numpy as np
import torch
from typing import NamedTuple, Optional

from env.mdp import SystemState, ScheduleAction, validate_action
from model import load_model
from model.mlp import sync_target
from agent.base import Agent
from agent.replay import ReplayMemory
from agent.structure import CONVENTIONAL, state_to_input, states_to_tensor, se_schedule
from util.optim import build_optimizer, adam_step
from util.exceptions import NonFiniteLoss

RECONCILED, LITERAL = 'reconciled', 'literal'


class DdpgTransition(NamedTuple):
    '''(s, v, v_hat, v_tilde, r, s_next); v_hat is None unless executed, then equal to v.'''
    s: SystemState
    v: np.ndarray
    v_hat: Optional[np.ndarray]
    v_tilde: np.ndarray
    r: float
    s_next: SystemState


def map_virtual_to_schedule(v, spec):
    '''
    Ranks sensors by v, descending, ties to the lower index; the top M sensors
    get channels 1..M in rank order and the rest stay idle.
    '''
    v = np.asarray(v, dtype=np.float64)
    order = np.argsort(-v, kind='stable')
    assign = [0] * spec.N
    for rank, n in enumerate(order[:spec.M]):
        assign[int(n)] = rank + 1
    return ScheduleAction(assign)


def canonical_virtual(action, spec):
    '''
    Rank-preserving encoding of a schedule: the sensor on channel m gets
    1 - (m - 1) * 2 / N; idle sensors get evenly spaced values below the lowest
    scheduled one, descending with sensor index and ending at -1.
    '''
    action = validate_action(action, spec.N, spec.M)
    N, M = spec.N, spec.M
    v = np.empty(N)
    lowest = 1.0 - (M - 1) * 2.0 / N
    idle = [n for n in range(N) if action[n] == 0]
    for n, m in enumerate(action):
        if m > 0:
            v[n] = 1.0 - (m - 1) * 2.0 / N
    for j, n in enumerate(idle):
        v[n] = lowest - (j + 1) * (lowest + 1.0) / len(idle)
    return v


@torch.no_grad()
def actor_outputs(actor_net, states, spec):
    return actor_net(states_to_tensor(states, spec)).numpy()


def actor_explore(actor_net, state, noise_sigma, rng, spec):
    '''clamp(mu(s) + N(0, sigma^2 I), -1, 1).'''
    mu = actor_outputs(actor_net, [state], spec)[0]
    return np.clip(mu + rng.normal(0.0, noise_sigma, size=spec.N), -1.0, 1.0)


def se_action_ddpg(actor_net, critic_net, state, sched, stage, spec, rng):
    '''
    SE selection for the actor-critic agent. The greedy schedule at any state is
    the ranking of the actor output there; exploration is Gaussian noise on the
    actor output. An SE schedule that passes the stage's constraint is executed
    as its canonical virtual action; otherwise the noisy actor action is.

    critic_net is not consulted; it is accepted so both agent families share
    one selection signature.

    :return: (executed v, v_hat or None, v_tilde)
    '''
    v_tilde = actor_outputs(actor_net, [state], spec)[0]
    if stage == CONVENTIONAL or rng.random() < sched.epsilon:
        return actor_explore(actor_net, state, sched.sigma, rng, spec), None, v_tilde
    a_tilde = map_virtual_to_schedule(v_tilde, spec)
    greedy_fn = lambda states: [map_virtual_to_schedule(v, spec) for v in actor_outputs(actor_net, states, spec)]
    a_hat = se_schedule(state, stage, greedy_fn, a_tilde, sched.xi, spec, rng)
    if a_hat is None:
        return actor_explore(actor_net, state, sched.sigma, rng, spec), None, v_tilde
    v_hat = canonical_virtual(a_hat, spec)
    return v_hat, v_hat, v_tilde


def critic_loss(batch, critic, target_critic, target_actor, alpha1, gamma):
    '''
    Same composite form as the SE-DQN loss with virtual actions:
    TD = r + gamma * Q_target(s', mu_target(s')) - Q(s, v),
    AD = Q(s, v_hat) - Q(s, v_tilde).
    '''
    s, se = batch['s'], batch['se']
    q_sv = critic(s, batch['v'])
    with torch.no_grad():
        y = batch['r'] + gamma * target_critic(batch['s_next'], target_actor(batch['s_next']))
    td = y - q_sv
    ad = critic(s, batch['v_hat']) - critic(s, batch['v_tilde'])
    per_record = torch.where(se, alpha1 * td ** 2 + (1.0 - alpha1) * ad ** 2, td ** 2)
    return per_record.mean()


def critic_loss_and_grad(batch, critic, target_critic, target_actor, alpha1, gamma):
    assert len(batch['r']) > 0, 'Empty batch'
    loss = critic_loss(batch, critic, target_critic, target_actor, alpha1, gamma)
    if not torch.isfinite(loss):
        raise NonFiniteLoss(f'critic loss is {loss.item()}')
    grads = torch.autograd.grad(loss, list(critic.parameters()))
    return loss.item(), grads


def actor_loss(batch, actor, critic, alpha2, form=RECONCILED):
    '''
    Reconciled form (default), minimized:
        -alpha2 * Q(s, mu(s)) + (1 - alpha2) * ||v - mu(s)||^2   for executed SE records,
        -Q(s, mu(s))                                            otherwise.
    The literal form flips the sign of the Q terms.
    '''
    mu = actor(batch['s'])
    q = critic(batch['s'], mu)
    if form == LITERAL:
        q = -q
    else:
        assert form == RECONCILED, f'Unknown actor loss form {form}'
    imitation = ((batch['v'] - mu) ** 2).sum(dim=-1)
    per_record = torch.where(batch['se'], -alpha2 * q + (1.0 - alpha2) * imitation, -q)
    return per_record.mean()


def actor_loss_and_grad(batch, actor, critic, alpha2, form=RECONCILED):
    '''Gradients w.r.t. the actor only; the critic's parameters are left untouched.'''
    assert len(batch['r']) > 0, 'Empty batch'
    loss = actor_loss(batch, actor, critic, alpha2, form)
    if not torch.isfinite(loss):
        raise NonFiniteLoss(f'actor loss is {loss.item()}')
    grads = torch.autograd.grad(loss, list(actor.parameters()))
    return loss.item(), grads


def ddpg_layout(spec):
    d = spec.N + spec.N * spec.M
    return {
        's': ((d,), np.float64),
        'v': ((spec.N,), np.float64),
        'v_hat': ((spec.N,), np.float64),
        'v_tilde': ((spec.N,), np.float64),
        'se': ((), np.bool_),
        'r': ((), np.float64),
        's_next': ((d,), np.float64),
    }


class SEDDPGAgent(Agent):
    '''
    SE-DDPG. Critic and actor updated every step, both targets soft-updated
    with rate delta; with both SE stages empty and alpha2 = 1 this is plain DDPG.
    '''
    extra_columns = ['actor_loss_mean', 'critic_loss_mean', 'noise_sigma']

    def __init__(self, spec, config, seed=0, hidden=None):
        super(SEDDPGAgent, self).__init__(spec, config, seed)
        torch.manual_seed(seed)
        hidden = tuple(hidden or config.hidden)
        self.actor = load_model('actor', N=spec.N, M=spec.M, hidden=hidden)
        self.critic = load_model('critic', N=spec.N, M=spec.M, hidden=hidden)
        self.target_actor = copy.deepcopy(self.actor)
        self.target_critic = copy.deepcopy(self.critic)
        self.actor_optimizer, self.actor_scheduler = build_optimizer(
            self.actor.parameters(), config.actor_lr, config.lr_decay)
        self.critic_optimizer, self.critic_scheduler = build_optimizer(
            self.critic.parameters(), config.critic_lr, config.lr_decay)
        self.memory = ReplayMemory(config.replay_size, ddpg_layout(spec))

    def extra_metrics(self):
        return ['actor_loss', 'critic_loss']

    def networks(self):
        return {'actor': self.actor, 'critic': self.critic}

    def optimizers(self):
        return {'actor': self.actor_optimizer, 'critic': self.critic_optimizer}

    def schedulers(self):
        return {'actor': self.actor_scheduler, 'critic': self.critic_scheduler}

    def act(self, state, stage):
        return se_action_ddpg(self.actor, self.critic, state, self.schedule, stage, self.spec, self.rng)

    def executed_schedule(self, executed):
        return map_virtual_to_schedule(executed, self.spec)

    def act_greedy(self, state):
        return map_virtual_to_schedule(actor_outputs(self.actor, [state], self.spec)[0], self.spec)

    def remember(self, state, executed, annotation, greedy, r, next_state):
        self.memory.push(s=state_to_input(state, self.spec),
                         v=executed,
                         v_hat=np.zeros(self.spec.N) if annotation is None else annotation,
                         v_tilde=greedy,
                         se=annotation is not None,
                         r=r,
                         s_next=state_to_input(next_state, self.spec))

    def update(self):
        c = self.config
        if len(self.memory) < c.batch_size:
            return
        batch = self.memory.sample(c.batch_size, self.rng)
        closs, cgrads = critic_loss_and_grad(batch, self.critic, self.target_critic, self.target_actor,
                                             c.alpha1, c.gamma)
        adam_step(self.critic_optimizer, self.critic.parameters(), cgrads)
        aloss, agrads = actor_loss_and_grad(batch, self.actor, self.critic, c.alpha2, c.actor_loss_form)
        adam_step(self.actor_optimizer, self.actor.parameters(), agrads)
        self.metrics['critic_loss'].update_state(closs)
        self.metrics['actor_loss'].update_state(aloss)
        self.metrics['loss'].update_state(closs)

    def after_step(self):
        if len(self.memory) >= self.config.batch_size:
            sync_target(self.target_actor, self.actor, self.config.delta)
            sync_target(self.target_critic, self.critic, self.config.delta)

    def log_row(self, episode, stage):
        row = super(SEDDPGAgent, self).log_row(episode, stage)
        row['actor_loss_mean'] = self.metrics['actor_loss'].result()
        row['critic_loss_mean'] = self.metrics['critic_loss'].result()
        row['noise_sigma'] = self.schedule.sigma
        return row


def train_se_ddpg(spec, config, seed=0, ckpt_dir=None, log_fn=None, verbose=True):
    '''
    :return: (trained agent, per-episode training log DataFrame)
    '''
    agent = SEDDPGAgent(spec, config, seed)
    log = agent.train(ckpt_dir=ckpt_dir, log_fn=log_fn, verbose=verbose)
    return agent, log
