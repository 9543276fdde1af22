import torch

from util.exceptions import NonFiniteGradient, ShapeError


class LearningRateDecay:
    '''Multiplier 1 / (1 + decay * episode) for LambdaLR.'''
    def __init__(self, decay):
        self.decay = decay

    def __call__(self, episode):
        return 1.0 / (1.0 + self.decay * episode)


def build_optimizer(params, lr, decay=0.0):
    '''
    Adam (beta1=0.9, beta2=0.999, eps=1e-8) with a scheduler that applies
    lr_t = lr / (1 + decay * episode); call scheduler.step() once per episode.
    '''
    optimizer = torch.optim.Adam(params, lr=lr, betas=(0.9, 0.999), eps=1e-8)
    scheduler = torch.optim.lr_scheduler.LambdaLR(optimizer, LearningRateDecay(decay))
    return optimizer, scheduler


def check_finite(grads):
    for g in grads:
        if g is not None and not torch.all(torch.isfinite(g)):
            raise NonFiniteGradient('gradient contains NaN or Inf')


def adam_step(optimizer, params, grads):
    '''Loads grads into params and takes one optimizer step.'''
    params = list(params)
    grads = list(grads)
    if len(params) != len(grads):
        raise ShapeError(f'{len(grads)} gradients for {len(params)} parameters')
    for p, g in zip(params, grads):
        if g.shape != p.shape:
            raise ShapeError(f'gradient shape {tuple(g.shape)} does not match parameter {tuple(p.shape)}')
    check_finite(grads)
    for p, g in zip(params, grads):
        p.grad = g.detach().clone()
    optimizer.step()
    optimizer.zero_grad(set_to_none=True)
