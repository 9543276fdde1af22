import numpy as np
import torch


class ReplayMemory:
    '''
    Fixed-capacity ring buffer of transitions, stored column-wise.
    Overwrites the oldest record once full; batches are drawn uniformly
    without replacement.
    '''
    def __init__(self, capacity, layout):
        '''
        :param capacity: Maximum number of records K
        :param layout: dict field name -> (per-record shape, numpy dtype)
        '''
        assert capacity > 0, 'Replay capacity must be positive'
        self.capacity = capacity
        self.buffers = {k: np.zeros((capacity,) + tuple(shape), dtype=dtype)
                        for k, (shape, dtype) in layout.items()}
        self.ptr = 0
        self.size = 0

    def __len__(self):
        return self.size

    def push(self, **fields):
        assert fields.keys() == self.buffers.keys(), \
            f'Expected fields {sorted(self.buffers)}, got {sorted(fields)}'
        for k, v in fields.items():
            self.buffers[k][self.ptr] = v
        self.ptr = (self.ptr + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def items(self, name):
        '''Stored values of one field, oldest first.'''
        if self.size < self.capacity:
            return self.buffers[name][:self.size].copy()
        return np.concatenate([self.buffers[name][self.ptr:], self.buffers[name][:self.ptr]])

    def sample(self, batch_size, rng):
        '''Returns a dict of torch tensors, one entry per field.'''
        assert batch_size <= self.size, f'Cannot draw {batch_size} records from {self.size}'
        idx = rng.choice(self.size, size=batch_size, replace=False)
        return {k: torch.from_numpy(buf[idx]) for k, buf in self.buffers.items()}
