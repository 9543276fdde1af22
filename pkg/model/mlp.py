'''Fully-connected networks for the Q, actor and critic approximators.'''
import math

import torch
import torch.nn as nn
import torch.nn.functional as F
from torch.nn.init import uniform_

from util.exceptions import ShapeError

DEFAULT_HIDDEN = (256, 256)


class MLP(nn.Module):
    def __init__(self, layer_dims, squash_output=False, out_init_range=None, dtype=torch.float64):
        '''
        Rectifier MLP with identity (or tanh-squashed) output.

        :param layer_dims: [input, hidden..., output]
        :param squash_output: If True, output passes through tanh into (-1, 1)
        :param out_init_range: If given, output layer weights and biases are drawn
            from uniform(-r, r) instead of the fan-in rule
        '''
        super(MLP, self).__init__()
        assert len(layer_dims) >= 2, 'Need at least input and output dimensions'
        self.layer_dims = [int(d) for d in layer_dims]
        self.squash_output = squash_output
        self.layers = nn.ModuleList([
            nn.Linear(d_in, d_out, dtype=dtype)
            for d_in, d_out in zip(self.layer_dims[:-1], self.layer_dims[1:])
        ])
        self.reset_parameters(out_init_range)

    def reset_parameters(self, out_init_range=None):
        for i, layer in enumerate(self.layers):
            if out_init_range is not None and i == len(self.layers) - 1:
                bound = out_init_range
            else:
                bound = 1.0 / math.sqrt(layer.in_features)
            uniform_(layer.weight, -bound, bound)
            uniform_(layer.bias, -bound, bound)

    @property
    def in_dim(self):
        return self.layer_dims[0]

    @property
    def out_dim(self):
        return self.layer_dims[-1]

    def forward(self, x):
        for layer in self.layers[:-1]:
            x = F.relu(layer(x))
        x = self.layers[-1](x)
        if self.squash_output:
            x = torch.tanh(x)
        return x


class QNetwork(MLP):
    '''Q(s, .; theta): state features of length N + N*M to N!/(N-M)! action values.'''
    def __init__(self, state_dim, n_actions, hidden=DEFAULT_HIDDEN, **kwargs):
        super(QNetwork, self).__init__([state_dim, *hidden, n_actions], **kwargs)


class Actor(MLP):
    '''mu(s; mu): state features to a virtual action in (-1, 1)^N.'''
    def __init__(self, state_dim, n_sensors, hidden=DEFAULT_HIDDEN, out_init_range=3e-3, **kwargs):
        super(Actor, self).__init__([state_dim, *hidden, n_sensors],
                                    squash_output=True, out_init_range=out_init_range, **kwargs)


class Critic(MLP):
    '''Q(s, v; theta): concatenated state features and virtual action to a scalar.'''
    def __init__(self, state_dim, n_sensors, hidden=DEFAULT_HIDDEN, **kwargs):
        super(Critic, self).__init__([state_dim + n_sensors, *hidden, 1], **kwargs)

    def forward(self, s, v):
        return super(Critic, self).forward(torch.cat([s, v], dim=-1)).squeeze(-1)


def forward(net, x):
    '''Checked forward pass of a plain MLP on a vector or batch.'''
    x = torch.as_tensor(x, dtype=next(net.parameters()).dtype)
    if x.shape[-1] != net.in_dim:
        raise ShapeError(f'expected input of length {net.in_dim}, got {tuple(x.shape)}')
    return net(x)


def backward(net, x, upstream):
    '''
    Reverse-mode gradients of <upstream, net(x)>.

    :return: (list of parameter gradients in net.parameters() order, input gradient)
    '''
    x = torch.as_tensor(x, dtype=next(net.parameters()).dtype).detach().requires_grad_(True)
    if x.shape[-1] != net.in_dim:
        raise ShapeError(f'expected input of length {net.in_dim}, got {tuple(x.shape)}')
    out = net(x)
    upstream = torch.as_tensor(upstream, dtype=out.dtype)
    if upstream.shape != out.shape:
        raise ShapeError(f'upstream gradient {tuple(upstream.shape)} does not match output {tuple(out.shape)}')
    params = list(net.parameters())
    grads = torch.autograd.grad(out, params + [x], grad_outputs=upstream, allow_unused=True)
    param_grads = [torch.zeros_like(p) if g is None else g for p, g in zip(params, grads[:-1])]
    return param_grads, grads[-1]


@torch.no_grad()
def sync_target(target, online, delta=1.0):
    '''target <- delta * online + (1 - delta) * target, parameter by parameter.'''
    if getattr(target, 'layer_dims', None) != getattr(online, 'layer_dims', None):
        raise ShapeError(f'layer dims differ: {target.layer_dims} vs {online.layer_dims}')
    for t, o in zip(target.parameters(), online.parameters()):
        t.copy_(delta * o + (1.0 - delta) * t)
    return target


def qnet(N, M, n_actions, hidden=DEFAULT_HIDDEN, **kwargs):
    return QNetwork(N + N * M, n_actions, hidden=hidden, **kwargs)


def actor(N, M, hidden=DEFAULT_HIDDEN, **kwargs):
    return Actor(N + N * M, N, hidden=hidden, **kwargs)


def critic(N, M, hidden=DEFAULT_HIDDEN, **kwargs):
    return Critic(N + N * M, N, hidden=hidden, **kwargs)
