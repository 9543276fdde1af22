import numpy as np
from dataclasses import dataclass, field

from util.exceptions import DomainError

DEFAULT_DROP_PROB = (0.2, 0.15, 0.1, 0.05, 0.01)


def default_drop_prob(h_bar=len(DEFAULT_DROP_PROB)):
    '''
    Default per-state drop probabilities for h_bar quantization levels.
    For h_bar != 5, picks evenly spaced entries of the five defaults, keeping
    the worst and best states.
    '''
    if h_bar == len(DEFAULT_DROP_PROB):
        return DEFAULT_DROP_PROB
    if h_bar == 1:
        return (DEFAULT_DROP_PROB[-1],)
    idx = np.round(np.linspace(0, len(DEFAULT_DROP_PROB) - 1, h_bar)).astype(int)
    return tuple(DEFAULT_DROP_PROB[i] for i in idx)


@dataclass(frozen=True, eq=False)
class ChannelModel:
    '''
    I.i.d. block-fading channels between N sensors and M channels.

    :param drop_prob: packet drop probability p_i for channel state i = 1..h_bar,
        non-increasing in i
    :param dist: (N, M, h_bar) array, dist[n, m] is the categorical distribution
        of the state of channel m as seen by sensor n
    '''
    drop_prob: np.ndarray
    dist: np.ndarray
    cdf: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        drop_prob = np.asarray(self.drop_prob, dtype=np.float64)
        dist = np.asarray(self.dist, dtype=np.float64)
        if dist.ndim != 3 or dist.shape[2] != len(drop_prob):
            raise DomainError(f'dist must be (N, M, h_bar={len(drop_prob)}), got {dist.shape}')
        N, M, _ = dist.shape
        if M > N:
            raise DomainError(f'need M <= N, got N={N}, M={M}')
        if np.any(drop_prob < 0) or np.any(drop_prob > 1):
            raise DomainError('drop probabilities must lie in [0, 1]')
        if np.any(np.diff(drop_prob) > 0):
            raise DomainError('drop probabilities must be non-increasing in the channel state')
        if np.any(dist < 0) or np.any(np.abs(dist.sum(-1) - 1) > 1e-12):
            raise DomainError('each channel state distribution must be non-negative and sum to 1')
        cdf = np.cumsum(dist, axis=-1)
        cdf[..., -1] = 1.0
        for name, arr in (('drop_prob', drop_prob), ('dist', dist), ('cdf', cdf)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def N(self):
        return self.dist.shape[0]

    @property
    def M(self):
        return self.dist.shape[1]

    @property
    def h_bar(self):
        return self.dist.shape[2]

    def to_dict(self):
        return {'drop_prob': self.drop_prob.tolist(), 'dist': self.dist.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(drop_prob=d['drop_prob'], dist=d['dist'])

    @classmethod
    def uniform(cls, N, M, drop_prob=DEFAULT_DROP_PROB):
        h_bar = len(drop_prob)
        return cls(drop_prob=drop_prob, dist=np.full((N, M, h_bar), 1.0 / h_bar))


def sample_channel_matrix(model, rng):
    '''
    One block-fading draw H, an (N, M) integer matrix with entries in 1..h_bar.
    Inverse-CDF per pair; a uniform draw equal to a cumulative boundary resolves
    to the lower state.
    '''
    # u in (0, 1] so zero-mass leading states are never drawn
    u = 1.0 - rng.random((model.N, model.M))
    return (model.cdf < u[..., None]).sum(-1) + 1


def packet_delivered(model, h, rng):
    '''True with probability 1 - p_h.'''
    if not 1 <= h <= model.h_bar:
        raise DomainError(f'channel state must be in 1..{model.h_bar}, got {h}')
    return bool(rng.random() >= model.drop_prob[h - 1])
