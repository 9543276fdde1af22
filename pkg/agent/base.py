import os
import time
import numpy as np
import pandas as pd
from tqdm import tqdm

from env.mdp import SchedulingEnv, is_valid_action
from agent.structure import ExplorationSchedule, stage_for
from util.metric import Metric
from util.utils import save_checkpoint
from util.exceptions import InvalidAction

CURVE_COLUMNS = ['episode', 'stage', 'steps', 'epsilon', 'xi', 'avg_sum_mse', 'loss_mean']


class Agent:
    '''
    Three-stage training loop shared by the DQN and DDPG families:
    loose SE episodes, tight SE episodes, then conventional episodes.
    Subclasses provide act(), remember(), update() and act_greedy().
    '''
    extra_columns = []

    def __init__(self, spec, config, seed):
        self.spec = spec
        self.config = config
        seeds = np.random.SeedSequence(seed).spawn(2)
        self.rng = np.random.default_rng(seeds[0])
        self.env_rng = np.random.default_rng(seeds[1])
        self.schedule = ExplorationSchedule(epsilon=config.epsilon_start, xi=config.epsilon_start,
                                            decay=config.epsilon_decay, floor=config.epsilon_min,
                                            sigma=config.noise_sigma, sigma_decay=config.noise_decay,
                                            sigma_floor=config.noise_min)
        self.total_steps = 0
        self.metrics = {k: Metric() for k in ['mse', 'loss'] + self.extra_metrics()}

    def extra_metrics(self):
        return []

    def __call__(self, state):
        return self.act_greedy(state)

    @property
    def episodes(self):
        c = self.config
        return c.loose_episodes + c.tight_episodes + c.conventional_episodes

    def networks(self):
        raise NotImplementedError

    def optimizers(self):
        raise NotImplementedError

    def schedulers(self):
        raise NotImplementedError

    def checkpoint_meta(self):
        return {'agent': self.config.agent, 'N': self.spec.N, 'M': self.spec.M}

    def train(self, ckpt_dir=None, log_fn=None, verbose=True):
        '''
        Runs all episodes and returns the per-episode training log.

        :param ckpt_dir: If given, checkpoints are written at stage boundaries and at the end
        :param log_fn: Optional callable receiving each episode's log row (e.g. wandb.log)
        '''
        c = self.config
        env = SchedulingEnv(self.spec, rng=self.env_rng)
        rows = []
        timings = []
        episodes = range(1, self.episodes + 1)
        for episode in tqdm(episodes, disable=not verbose):
            stage = stage_for(episode, c.loose_episodes, c.tight_episodes)
            start = time.perf_counter()
            state = env.reset()
            for _ in range(c.steps_per_episode):
                executed, annotation, greedy = self.act(state, stage)
                schedule = self.executed_schedule(executed)
                if not is_valid_action(schedule, self.spec.N, self.spec.M):
                    raise InvalidAction(f'executed schedule {tuple(schedule)} violates the channel constraint')
                next_state, r = env.step(schedule)
                self.remember(state, executed, annotation, greedy, r, next_state)
                self.update()
                self.total_steps += 1
                self.after_step()
                self.schedule.step()
                self.metrics['mse'].update_state(-r)
                state = next_state
            for sch in self.schedulers().values():
                sch.step()

            row = self.log_row(episode, stage)
            rows.append(row)
            timings.append({'episode': episode, 'wall_ms': 1000.0 * (time.perf_counter() - start)})
            if verbose:
                lr = next(iter(self.optimizers().values())).param_groups[0]['lr']
                print('Episode {}: stage={}, avg sum MSE={:.6f}, loss={:.6f}, eps={:.4f}, lr={:.2e}'.format(
                    episode, stage, row['avg_sum_mse'], row['loss_mean'], row['epsilon'], lr))
            if log_fn is not None:
                log_fn(row)
            for metric in self.metrics.values():
                metric.reset_state()

            boundary = episode in (c.loose_episodes, c.loose_episodes + c.tight_episodes, self.episodes)
            if ckpt_dir is not None and boundary:
                save_checkpoint(os.path.join(ckpt_dir, 'model.{:04d}.h5'.format(episode)),
                                self.networks(), self.optimizers(), self.schedulers(),
                                verbose=verbose, episode=episode, **self.checkpoint_meta())

        self.timings = pd.DataFrame(timings, columns=['episode', 'wall_ms'])
        return pd.DataFrame(rows, columns=CURVE_COLUMNS + self.extra_columns)

    def log_row(self, episode, stage):
        return {
            'episode': episode,
            'stage': stage,
            'steps': self.total_steps,
            'epsilon': self.schedule.epsilon,
            'xi': self.schedule.xi,
            'avg_sum_mse': self.metrics['mse'].result(),
            'loss_mean': self.metrics['loss'].result(),
        }

    def executed_schedule(self, executed):
        return executed

    def act(self, state, stage):
        raise NotImplementedError

    def remember(self, state, executed, annotation, greedy, r, next_state):
        raise NotImplementedError

    def update(self):
        raise NotImplementedError

    def after_step(self):
        pass

    def act_greedy(self, state):
        raise NotImplementedError
