import math
import pytest
import torch

from util.optim import build_optimizer, adam_step, LearningRateDecay
from util.exceptions import NonFiniteGradient, ShapeError


def _param(value):
    return torch.nn.Parameter(torch.tensor([value], dtype=torch.float64))


def test_zero_gradient_is_fixed_point():
    p = _param(1.5)
    opt, _ = build_optimizer([p], lr=0.1)
    for _ in range(3):
        adam_step(opt, [p], [torch.zeros(1, dtype=torch.float64)])
    assert p.item() == 1.5


def test_first_step_moves_by_lr():
    p = _param(0.0)
    opt, _ = build_optimizer([p], lr=0.1)
    adam_step(opt, [p], [torch.ones(1, dtype=torch.float64)])
    assert p.item() == pytest.approx(-0.1, abs=1e-8)


def test_quadratic_trajectory_matches_recurrence():
    lr, b1, b2, eps = 0.05, 0.9, 0.999, 1e-8
    p = _param(2.0)
    opt, _ = build_optimizer([p], lr=lr)
    x, m, v = 2.0, 0.0, 0.0
    for t in range(1, 11):
        g = x  # d/dx of x^2 / 2
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        x = x - lr * (m / (1 - b1 ** t)) / (math.sqrt(v / (1 - b2 ** t)) + eps)
        adam_step(opt, [p], [p.detach().clone()])
        assert p.item() == pytest.approx(x, abs=1e-10)


def test_learning_rate_decays_per_episode():
    p = _param(0.0)
    opt, scheduler = build_optimizer([p], lr=1e-4, decay=1e-3)
    for episode in range(1, 6):
        scheduler.step()
        assert opt.param_groups[0]['lr'] == pytest.approx(1e-4 / (1 + 1e-3 * episode), rel=1e-12)
    assert LearningRateDecay(0.5)(2) == 0.5


def test_non_finite_gradient():
    p = _param(0.0)
    opt, _ = build_optimizer([p], lr=0.1)
    with pytest.raises(NonFiniteGradient):
        adam_step(opt, [p], [torch.tensor([float('nan')], dtype=torch.float64)])
    assert p.item() == 0.0


def test_shape_mismatch():
    p = _param(0.0)
    opt, _ = build_optimizer([p], lr=0.1)
    with pytest.raises(ShapeError):
        adam_step(opt, [p], [torch.zeros(2, dtype=torch.float64)])
    with pytest.raises(ShapeError):
        adam_step(opt, [p], [])
