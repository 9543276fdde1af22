import json
from dataclasses import dataclass, field, asdict, fields, replace

from estimation.channel import DEFAULT_DROP_PROB
from util.exceptions import ConfigError

AGENTS = ('dqn', 'se_dqn', 'ddpg', 'se_ddpg', 'value_iteration')
DQN_FAMILY = ('dqn', 'se_dqn')
DDPG_FAMILY = ('ddpg', 'se_ddpg')


@dataclass
class ExperimentConfig:
    '''
    Everything one run needs. Defaults are the published hyperparameters;
    network widths, noise parameters and the value iteration truncation are
    choices of this implementation.
    '''
    # System
    N: int = 6
    M: int = 3
    seed: int = 0
    h_bar: int = 5
    drop_prob: list = field(default_factory=lambda: list(DEFAULT_DROP_PROB))
    tau_cap: int = 100

    # Agent and training schedule
    agent: str = 'se_dqn'
    loose_episodes: int = 50
    tight_episodes: int = 100
    conventional_episodes: int = 150
    steps_per_episode: int = 500

    # Shared DRL hyperparameters
    gamma: float = 0.95
    batch_size: int = 128
    replay_size: int = 20000
    alpha1: float = 0.5
    epsilon_start: float = 1.0
    epsilon_decay: float = 0.999
    epsilon_min: float = 0.01
    lr_decay: float = 0.001
    hidden: list = field(default_factory=lambda: [256, 256])

    # DQN
    lr: float = 0.0001
    target_update: int = 100

    # DDPG
    actor_lr: float = 0.0001
    critic_lr: float = 0.001
    delta: float = 0.005
    alpha2: float = 0.9
    noise_sigma: float = 0.3
    noise_decay: float = 0.999
    noise_min: float = 0.01
    actor_loss_form: str = 'reconciled'

    # Value iteration truncation
    tau_cap_vi: int = 20
    h_bar_vi: int = 2
    vi_tol: float = 1e-8

    # Evaluation and output
    eval_steps: int = 10000
    out_dir: str = './runs'

    @property
    def total_episodes(self):
        return self.loose_episodes + self.tight_episodes + self.conventional_episodes

    def validate(self):
        def check(cond, msg):
            if not cond:
                raise ConfigError(msg)
        check(self.agent in AGENTS, f'agent must be one of {AGENTS}, got {self.agent!r}')
        check(1 <= self.M <= self.N, f'need 1 <= M <= N, got N={self.N}, M={self.M}')
        check(self.h_bar >= 1 and self.h_bar_vi >= 1, 'channel levels must be >= 1')
        check(len(self.drop_prob) >= 1 and all(0.0 <= p <= 1.0 for p in self.drop_prob),
              'drop probabilities must lie in [0, 1]')
        check(all(a >= b for a, b in zip(self.drop_prob, self.drop_prob[1:])),
              'drop probabilities must be non-increasing')
        check(self.tau_cap >= 1 and self.tau_cap_vi >= 1, 'AoI caps must be >= 1')
        check(min(self.loose_episodes, self.tight_episodes, self.conventional_episodes) >= 0,
              'episode counts must be non-negative')
        check(self.steps_per_episode >= 1, 'steps_per_episode must be >= 1')
        check(0.0 <= self.gamma < 1.0, f'gamma must be in [0, 1), got {self.gamma}')
        check(1 <= self.batch_size <= self.replay_size, 'need 1 <= batch_size <= replay_size')
        check(0.0 <= self.alpha1 <= 1.0 and 0.0 <= self.alpha2 <= 1.0, 'alpha1, alpha2 must be in [0, 1]')
        check(0.0 <= self.delta <= 1.0, 'delta must be in [0, 1]')
        check(0.0 < self.epsilon_min <= self.epsilon_start <= 1.0, 'need 0 < epsilon_min <= epsilon_start <= 1')
        check(0.0 < self.epsilon_decay <= 1.0 and 0.0 < self.noise_decay <= 1.0, 'decay rates must be in (0, 1]')
        check(0.0 <= self.noise_min <= self.noise_sigma, 'need 0 <= noise_min <= noise_sigma')
        check(min(self.lr, self.actor_lr, self.critic_lr) > 0 and self.lr_decay >= 0, 'learning rates must be positive')
        check(self.target_update >= 1, 'target_update must be >= 1')
        check(self.actor_loss_form in ('reconciled', 'literal'), f'unknown actor_loss_form {self.actor_loss_form!r}')
        check(len(self.hidden) >= 1 and all(h >= 1 for h in self.hidden), 'hidden widths must be positive')
        check(self.eval_steps >= 1, 'eval_steps must be >= 1')
        check(self.vi_tol > 0, 'vi_tol must be positive')
        return self

    def for_agent(self, agent):
        '''
        Copy set up for one agent. The plain dqn/ddpg agents keep the total
        episode budget but spend all of it in the conventional stage.
        '''
        cfg = replace(self, agent=agent, drop_prob=list(self.drop_prob), hidden=list(self.hidden))
        if agent in ('dqn', 'ddpg'):
            cfg = replace(cfg, loose_episodes=0, tight_episodes=0, conventional_episodes=self.total_episodes)
        return cfg

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f'unknown config keys: {sorted(unknown)}')
        return cls(**d)

    def save(self, path):
        with open(path, 'w', encoding='utf-8', newline='\n') as f:
            json.dump(self.to_dict(), f, indent=4)

    @classmethod
    def load(cls, path):
        try:
            with open(path, 'r', encoding='utf-8') as f:
                d = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f'cannot read config {path}: {e}') from e
        if not isinstance(d, dict):
            raise ConfigError(f'config {path} must hold a JSON object')
        return cls.from_dict(d)
