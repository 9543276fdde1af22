import os
import sys
import json
import argparse
from dataclasses import replace
from pprint import pprint

from harness.config import ExperimentConfig, AGENTS
from harness.system import GeneratedSystem
from harness.experiment import run_experiment, certify_threshold, compare_agents, build_system
from harness.evaluate import evaluate_policy, load_policy
from harness.gradcheck import run_gradchecks
from util.utils import ParseKwargs, initialize_wandb
from util.exceptions import (SchedulingError, ConfigError, DomainError, CapacityError, InvalidAction, ShapeError,
                             TrainingDivergence, CertificationFailure, GenerationFailure, NonConvergence,
                             IncompletePolicy)

COMMANDS = ('run', 'evaluate', 'certify-threshold', 'gradcheck', 'compare')
# First match wins; any other SchedulingError is treated as a bad configuration.
EXIT_CODES = (
    (TrainingDivergence, 3),
    (CertificationFailure, 4), (GenerationFailure, 4), (NonConvergence, 4), (IncompletePolicy, 4),
    (ConfigError, 2), (DomainError, 2), (CapacityError, 2), (InvalidAction, 2), (ShapeError, 2),
    (SchedulingError, 2),
)

# Command-line overrides applied on top of --config (or the defaults).
OVERRIDES = {
    'agent': str, 'N': int, 'M': int, 'seed': int,
    'loose_episodes': int, 'tight_episodes': int, 'conventional_episodes': int,
    'steps_per_episode': int, 'eval_steps': int, 'gamma': float, 'batch_size': int,
    'alpha1': float, 'alpha2': float, 'actor_loss_form': str, 'tau_cap_vi': int, 'h_bar_vi': int,
}


class Parser(argparse.ArgumentParser):
    def __init__(self):
        super(Parser, self).__init__(description='Structure-enhanced DRL for remote estimation scheduling')
        self.add_argument('command', choices=COMMANDS)
        # I/O parameters
        self.add_argument('--config', type=str, default=None,
                  help='JSON experiment config; missing keys take their defaults')
        self.add_argument('--models_dir', '--out', dest='models_dir', type=str, default=None,
                  help='directory to save runs (overrides out_dir)')
        self.add_argument('--checkpoint', type=str, default=None,
                  help='checkpoint to evaluate')
        self.add_argument('--system', type=str, default=None,
                  help='system.json to evaluate on; regenerated from the seed if omitted')
        self.add_argument('--num_seeds', type=int, default=1,
                  help='Number of consecutive seeds to certify')
        self.add_argument('--agents', nargs='+', default=['dqn', 'se_dqn', 'ddpg', 'se_ddpg'],
                  choices=AGENTS, help='Agents to compare')
        self.add_argument('--hidden', nargs='+', type=int, default=None,
                  help='Hidden layer widths')
        for name, kind in OVERRIDES.items():
            self.add_argument('--' + name, type=kind, default=None)
        self.add_argument('--steps', dest='eval_steps', type=int, default=None,
                  help='evaluation steps (same as --eval_steps)')
        self.add_argument('--set', nargs='*', action=ParseKwargs, default={},
                  help='further config overrides passed as key1=value1 key2=value2')
        self.add_bool_arg('verbose', True)

        # Weights & Biases
        self.add_bool_arg('use_wandb', False)
        self.add_argument('--wandb_api_key_path', type=str,
                  help='Path to Weights & Biases API Key')
        self.add_argument('--wandb_kwargs', nargs='*', action=ParseKwargs, default={},
                  help='keyword arguments for wandb.init() passed as key1=value1 key2=value2')

    def add_bool_arg(self, name, default=True):
        """Add boolean argument to argparse parser"""
        group = self.add_mutually_exclusive_group(required=False)
        group.add_argument('--' + name, dest=name, action='store_true')
        group.add_argument('--no_' + name, dest=name, action='store_false')
        self.set_defaults(**{name: default})

    def parse(self, argv=None):
        args = self.parse_args(argv)
        config = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
        overrides = {k: getattr(args, k) for k in OVERRIDES if getattr(args, k) is not None}
        overrides.update(args.set)
        if args.hidden is not None:
            overrides['hidden'] = list(args.hidden)
        if args.models_dir is not None:
            overrides['out_dir'] = args.models_dir
        try:
            args.config = replace(config, **overrides).validate()
        except TypeError as e:
            raise ConfigError(str(e)) from e
        if args.verbose:
            print('Arguments:')
            pprint({k: v for k, v in vars(args).items() if k != 'config'})
        return args


def evaluate_checkpoint(args):
    config = args.config
    system = GeneratedSystem.load(args.system) if args.system else build_system(config)
    spec = system.to_spec(config.gamma, config.tau_cap)
    policy = load_policy(args.checkpoint, spec, verbose=args.verbose)
    avg, trace = evaluate_policy(policy, spec, steps=config.eval_steps, seed=config.seed, verbose=args.verbose)
    trace.to_csv(args.checkpoint + '.evaluation_trace.csv', index=False, lineterminator='\n')
    evaluation = {'checkpoint': args.checkpoint, 'avg_sum_mse': avg, 'steps': config.eval_steps,
                  'seed': config.seed}
    with open(args.checkpoint + '.evaluation.json', 'w', encoding='utf-8', newline='\n') as f:
        json.dump(evaluation, f, indent=2)
    print('Average sum MSE over {} steps: {:.6f}'.format(config.eval_steps, avg))
    return evaluation


def dispatch(args):
    config = args.config
    if args.command == 'run':
        log_fn = None
        if args.use_wandb:
            import wandb
            initialize_wandb(config.to_dict(), args.wandb_api_key_path, args.wandb_kwargs)
            log_fn = wandb.log
        return run_experiment(config, verbose=args.verbose, log_fn=log_fn)
    if args.command == 'evaluate':
        if args.checkpoint is None or not os.path.exists(args.checkpoint):
            raise ConfigError(f'evaluate needs an existing --checkpoint, got {args.checkpoint}')
        return evaluate_checkpoint(args)
    if args.command == 'certify-threshold':
        return certify_threshold(config, num_seeds=args.num_seeds, verbose=args.verbose)
    if args.command == 'gradcheck':
        return run_gradchecks(seed=config.seed, verbose=args.verbose)
    assert args.command == 'compare'
    return compare_agents(config, agents=tuple(args.agents), verbose=args.verbose)


def main(argv=None):
    try:
        args = Parser().parse(argv)
        dispatch(args)
    except Exception as e:
        for kind, code in EXIT_CODES:
            if isinstance(e, kind):
                print(f'{type(e).__name__}: {e}', file=sys.stderr)
                return code
        raise
    return 0


if __name__ == '__main__':
    sys.exit(main())
