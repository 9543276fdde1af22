import numpy as np
import torch

from model import load_model
from model.gradcheck import directional_gradcheck, GRADCHECK_TOL
from env.mdp import enumerate_actions
from agent.dqn import se_loss, se_loss_and_grad
from agent.ddpg import critic_loss, critic_loss_and_grad, actor_loss, actor_loss_and_grad, RECONCILED, LITERAL
from util.exceptions import CertificationFailure


def random_batch(N, M, batch_size, rng, virtual=False):
    '''Synthetic replay batch with about half the records carrying an SE annotation.'''
    d = N + N * M
    batch = {
        's': torch.from_numpy(rng.uniform(0.0, 1.0, size=(batch_size, d))),
        's_next': torch.from_numpy(rng.uniform(0.0, 1.0, size=(batch_size, d))),
        'r': torch.from_numpy(-rng.uniform(1.0, 10.0, size=batch_size)),
        'se': torch.from_numpy(rng.random(batch_size) < 0.5),
    }
    if virtual:
        for k in ('v', 'v_hat', 'v_tilde'):
            batch[k] = torch.from_numpy(rng.uniform(-1.0, 1.0, size=(batch_size, N)))
    else:
        n_actions = len(enumerate_actions(N, M))
        for k in ('a', 'a_hat', 'a_tilde'):
            batch[k] = torch.from_numpy(rng.integers(0, n_actions, size=batch_size))
    return batch


def run_gradchecks(N=3, M=2, seed=0, hidden=(16, 16), batch_size=32, n_dirs=100, alpha1=0.5, alpha2=0.9,
                   gamma=0.95, verbose=True):
    '''
    Directional gradient checks of the SE-DQN loss, the critic loss and both
    actor loss forms on small random networks.

    :return: dict loss name -> largest relative error
    :raises CertificationFailure: if any error exceeds GRADCHECK_TOL
    '''
    rng = np.random.default_rng(seed)
    torch.manual_seed(seed)
    gen = torch.Generator().manual_seed(seed)
    n_actions = len(enumerate_actions(N, M))
    qnet = load_model('qnet', N=N, M=M, n_actions=n_actions, hidden=hidden)
    target = load_model('qnet', N=N, M=M, n_actions=n_actions, hidden=hidden)
    actor = load_model('actor', N=N, M=M, hidden=hidden)
    critic = load_model('critic', N=N, M=M, hidden=hidden)
    target_actor = load_model('actor', N=N, M=M, hidden=hidden)
    target_critic = load_model('critic', N=N, M=M, hidden=hidden)

    dqn_batch = random_batch(N, M, batch_size, rng)
    ddpg_batch = random_batch(N, M, batch_size, rng, virtual=True)
    checks = {
        'se_dqn': (lambda: se_loss(dqn_batch, qnet, target, alpha1, gamma),
                   qnet, se_loss_and_grad(dqn_batch, qnet, target, alpha1, gamma)[1]),
        'critic': (lambda: critic_loss(ddpg_batch, critic, target_critic, target_actor, alpha1, gamma),
                   critic, critic_loss_and_grad(ddpg_batch, critic, target_critic, target_actor, alpha1, gamma)[1]),
    }
    for form in (RECONCILED, LITERAL):
        checks[f'actor_{form}'] = (lambda form=form: actor_loss(ddpg_batch, actor, critic, alpha2, form),
                                   actor, actor_loss_and_grad(ddpg_batch, actor, critic, alpha2, form)[1])

    worst = {}
    for name, (loss_fn, net, grads) in checks.items():
        errors = directional_gradcheck(loss_fn, net.parameters(), grads, n_dirs=n_dirs, generator=gen)
        worst[name] = max(errors)
        if verbose:
            print('{}: max relative error {:.3e} over {} directions'.format(name, worst[name], n_dirs))
    failed = {k: v for k, v in worst.items() if v > GRADCHECK_TOL}
    if failed:
        raise CertificationFailure(f'gradient check failed: {failed}')
    return worst
