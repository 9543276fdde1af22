import json
import numpy as np
from dataclasses import dataclass

from estimation.process import ProcessModel
from estimation.channel import ChannelModel, default_drop_prob
from env.mdp import MdpSpec
from util.exceptions import GenerationFailure, NonConvergence

MAX_REDRAWS = 100
RHO_RANGE = (1.0, 1.4)
STATE_DIM, MEAS_DIM = 2, 1


@dataclass(eq=False)
class GeneratedSystem:
    processes: list
    channels: ChannelModel
    seed: int
    spectral_radii: list

    @property
    def N(self):
        return self.channels.N

    @property
    def M(self):
        return self.channels.M

    def to_spec(self, gamma, tau_cap):
        return MdpSpec(self.processes, self.channels, gamma=gamma, tau_cap=tau_cap)

    def to_dict(self):
        return {
            'seed': self.seed,
            'spectral_radii': list(self.spectral_radii),
            'processes': [p.to_dict() for p in self.processes],
            'channels': self.channels.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(processes=[ProcessModel.from_dict(p) for p in d['processes']],
                   channels=ChannelModel.from_dict(d['channels']),
                   seed=d['seed'],
                   spectral_radii=list(d['spectral_radii']))

    def save(self, path):
        with open(path, 'w', encoding='utf-8', newline='\n') as f:
            json.dump(self.to_dict(), f, indent=2)

    @classmethod
    def load(cls, path):
        with open(path, 'r', encoding='utf-8') as f:
            return cls.from_dict(json.load(f))


def _draw_process(rng):
    '''
    A has i.i.d. uniform(-1, 1) entries rescaled to a spectral radius drawn
    uniformly from (1, 1.4); C is uniform(0, 1); W and V are identities.
    '''
    A = rng.uniform(-1.0, 1.0, size=(STATE_DIM, STATE_DIM))
    rho = np.max(np.abs(np.linalg.eigvals(A)))
    if rho < 1e-6:
        return None
    target = rng.uniform(*RHO_RANGE)
    A = A * (target / rho)
    C = rng.uniform(0.0, 1.0, size=(MEAS_DIM, STATE_DIM))
    try:
        return ProcessModel(A=A, C=C, W=np.eye(STATE_DIM), V=np.eye(MEAS_DIM))
    except NonConvergence:
        return None


def generate_system(seed, N, M, h_bar=5, drop_prob=None):
    '''
    Random unstable processes and random channel state distributions,
    deterministic in seed.

    :raises GenerationFailure: after MAX_REDRAWS rejected process draws
    '''
    rng = np.random.default_rng(seed)
    drop_prob = default_drop_prob(h_bar) if drop_prob is None else tuple(drop_prob)
    processes = []
    redraws = 0
    while len(processes) < N:
        process = _draw_process(rng)
        if process is None:
            redraws += 1
            if redraws > MAX_REDRAWS:
                raise GenerationFailure(f'{redraws} rejected process draws for seed {seed}')
            continue
        processes.append(process)

    weights = rng.uniform(0.0, 1.0, size=(N, M, len(drop_prob)))
    dist = weights / weights.sum(axis=-1, keepdims=True)
    channels = ChannelModel(drop_prob=drop_prob, dist=dist)
    return GeneratedSystem(processes, channels, seed, [p.spectral_radius for p in processes])
