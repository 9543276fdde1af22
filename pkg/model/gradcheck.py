import torch

GRADCHECK_EPS = 1e-5
GRADCHECK_TOL = 1e-4


def relative_error(a, b, floor=1e-8):
    return abs(a - b) / max(abs(a) + abs(b), floor)


@torch.no_grad()
def _shift(params, direction, scale):
    for p, d in zip(params, direction):
        p.add_(d, alpha=scale)


def directional_gradcheck(loss_fn, params, grads, n_dirs=100, eps=GRADCHECK_EPS, generator=None):
    '''
    Compares analytic gradients with central differences along random unit
    directions in parameter space.

    :param loss_fn: zero-argument callable returning the scalar loss at the current parameters
    :param params: parameters the gradients refer to, perturbed in place and restored
    :param grads: analytic gradients, same order as params
    :return: list of relative errors, one per direction
    '''
    params = list(params)
    assert len(params) == len(grads), 'One gradient per parameter'
    errors = []
    for _ in range(n_dirs):
        direction = [torch.randn(p.shape, dtype=p.dtype, generator=generator) for p in params]
        norm = torch.sqrt(sum((d ** 2).sum() for d in direction))
        direction = [d / norm for d in direction]
        analytic = float(sum((g * d).sum() for g, d in zip(grads, direction)))
        with torch.no_grad():
            _shift(params, direction, eps)
            plus = float(loss_fn())
            _shift(params, direction, -2.0 * eps)
            minus = float(loss_fn())
            _shift(params, direction, eps)
        errors.append(relative_error(analytic, (plus - minus) / (2.0 * eps)))
    return errors
