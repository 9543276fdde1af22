import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from estimation.process import ProcessModel
from estimation.channel import ChannelModel
from env.mdp import MdpSpec
from harness.config import ExperimentConfig


def scalar_process(a=2.0, w=1.0, p_bar=1.0):
    return ProcessModel(A=[[a]], C=[[1.0]], W=[[w]], V=[[1.0]], P_bar=[[p_bar]])


def make_spec(N=2, M=1, drop_prob=(0.2, 0.01), processes=None, dist=None, gamma=0.95, tau_cap=20):
    processes = processes or [scalar_process() for _ in range(N)]
    if dist is None:
        channels = ChannelModel.uniform(N, M, drop_prob)
    else:
        channels = ChannelModel(drop_prob=drop_prob, dist=dist)
    return MdpSpec(processes, channels, gamma=gamma, tau_cap=tau_cap)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def tiny_config(tmp_path):
    return ExperimentConfig(N=2, M=1, seed=3, loose_episodes=1, tight_episodes=1, conventional_episodes=1,
                            steps_per_episode=30, batch_size=8, replay_size=100, hidden=[16, 16],
                            eval_steps=100, tau_cap_vi=8, out_dir=str(tmp_path))
