import torch
import numpy as np


class Metric:
    '''Sample-weighted running average.'''
    def __init__(self) -> None:
        self.tot_val = 0
        self.num_samples = 0

    def update_state(self, val, samples=1):
        if isinstance(val, torch.Tensor):
            val = val.cpu().detach().item()
        if isinstance(val, np.ndarray):
            val = val.item()
        self.num_samples += samples
        self.tot_val += (val * samples)

    def result(self):
        if self.num_samples == 0:
            return 0
        return self.tot_val / self.num_samples

    def reset_state(self):
        self.tot_val = 0
        self.num_samples = 0


def first_episode_reaching(curve, level):
    '''
    First episode (1-based) whose average sum MSE is at or below level,
    or None if the curve never gets there.

    curve: sequence of per-episode average sum MSE
    '''
    hits = np.nonzero(np.asarray(curve) <= level)[0]
    return int(hits[0]) + 1 if len(hits) else None


def relative_reduction(baseline, candidate):
    '''(baseline - candidate) / baseline; positive when candidate is lower.'''
    return (baseline - candidate) / baseline
