import os
import json
import numpy as np
import pandas as pd
from pprint import pprint

from env.value_iteration import (value_iteration, check_threshold_structure, write_threshold_report,
                                 write_policy_csv, state_space_size, MAX_VI_STATES)
from agent.dqn import SEDQNAgent
from agent.ddpg import SEDDPGAgent
from harness.config import DQN_FAMILY, DDPG_FAMILY
from harness.system import generate_system
from harness.evaluate import evaluate_policy
from util.metric import first_episode_reaching, relative_reduction
from util.utils import set_seed, summary, save_checkpoint
from util.exceptions import CertificationFailure, ConfigError

CONFIG_FILE = 'config.json'
SYSTEM_FILE = 'system.json'
CURVE_FILE = 'training_curve.csv'
TIMING_FILE = 'timing.csv'
EVAL_FILE = 'evaluation.json'
TRACE_FILE = 'evaluation_trace.csv'
THRESHOLD_FILE = 'threshold_report.json'
POLICY_FILE = 'policy.csv'
COMPARISON_FILE = 'comparison.csv'
VI_CHECKPOINT = 'value_iteration.npz'


def run_dir_name(config):
    return 'agent{}_N{}_M{}_seed{}'.format(config.agent, config.N, config.M, config.seed)


def _write_json(obj, path):
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        json.dump(obj, f, indent=2)


def _write_csv(df, path):
    df.to_csv(path, index=False, lineterminator='\n')


def build_system(config):
    '''Generated system for config.seed; value iteration runs use the coarser channel quantization.'''
    h_bar = config.h_bar_vi if config.agent == 'value_iteration' else config.h_bar
    drop_prob = config.drop_prob if len(config.drop_prob) == h_bar else None
    return generate_system(config.seed, config.N, config.M, h_bar=h_bar, drop_prob=drop_prob)


def build_agent(spec, config):
    if config.agent in DQN_FAMILY:
        return SEDQNAgent(spec, config, seed=config.seed)
    assert config.agent in DDPG_FAMILY, f'Not a learning agent: {config.agent}'
    return SEDDPGAgent(spec, config, seed=config.seed)


def truncated_spec(config, system):
    '''MDP solved by value iteration: tau capped at tau_cap_vi.'''
    spec = system.to_spec(config.gamma, config.tau_cap_vi)
    n_states = state_space_size(spec)
    if n_states > MAX_VI_STATES:
        raise ConfigError(f'value iteration over {n_states} states (N={spec.N}, M={spec.M}, h_bar={spec.h_bar}, '
                          f'tau_cap_vi={spec.tau_cap}) exceeds {MAX_VI_STATES}; use a smaller instance')
    return spec


def _run_value_iteration(config, system, run_dir, verbose):
    vi_spec = truncated_spec(config, system)
    result = value_iteration(vi_spec, tol=config.vi_tol, verbose=verbose)
    violations = check_threshold_structure(result, vi_spec)
    write_threshold_report(violations, os.path.join(run_dir, THRESHOLD_FILE))
    write_policy_csv(result, os.path.join(run_dir, POLICY_FILE))
    np.savez(os.path.join(run_dir, 'checkpoints', VI_CHECKPOINT),
             values=result.values, policy=result.policy, residual=result.residual,
             iterations=result.iterations, N=vi_spec.N, M=vi_spec.M)
    curve = pd.DataFrame({'sweep': np.arange(1, len(result.history) + 1), 'residual': result.history})
    if verbose:
        print('Threshold violations:', len(violations))
    return result, curve, {'iterations': result.iterations, 'residual': result.residual,
                           'threshold_violations': len(violations)}


def run_experiment(config, verbose=True, log_fn=None):
    '''
    One full run: generate the system, train (or solve) the agent, evaluate the
    greedy policy and write every artifact under out_dir/<run name>/.

    :return: dict with 'run_dir', 'avg_sum_mse', 'curve' and, for learning agents, 'agent'
    '''
    config.validate()
    set_seed(config.seed)
    run_dir = os.path.join(config.out_dir, run_dir_name(config))
    ckpt_dir = os.path.join(run_dir, 'checkpoints')
    os.makedirs(ckpt_dir, exist_ok=True)
    if verbose:
        pprint(config.to_dict())
    config.save(os.path.join(run_dir, CONFIG_FILE))

    system = build_system(config)
    system.save(os.path.join(run_dir, SYSTEM_FILE))
    spec = system.to_spec(config.gamma, config.tau_cap)

    out = {'run_dir': run_dir}
    extra = {}
    if config.agent == 'value_iteration':
        result, curve, extra = _run_value_iteration(config, system, run_dir, verbose)
        policy = result
    else:
        agent = build_agent(spec, config)
        if verbose:
            summary(agent.networks())
        curve = agent.train(ckpt_dir=ckpt_dir, log_fn=log_fn, verbose=verbose)
        if agent.episodes == 0:
            save_checkpoint(os.path.join(ckpt_dir, 'model.0000.h5'), agent.networks(), agent.optimizers(),
                            agent.schedulers(), verbose=verbose, episode=0, **agent.checkpoint_meta())
        _write_csv(agent.timings, os.path.join(run_dir, TIMING_FILE))
        policy = agent
        out['agent'] = agent
    _write_csv(curve, os.path.join(run_dir, CURVE_FILE))

    avg, trace = evaluate_policy(policy, spec, steps=config.eval_steps, seed=config.seed)
    _write_csv(trace, os.path.join(run_dir, TRACE_FILE))
    evaluation = {'agent': config.agent, 'avg_sum_mse': avg, 'steps': config.eval_steps, 'seed': config.seed}
    evaluation.update(extra)
    _write_json(evaluation, os.path.join(run_dir, EVAL_FILE))
    if verbose:
        print('Average sum MSE over {} steps: {:.6f}'.format(config.eval_steps, avg))

    out.update(avg_sum_mse=avg, curve=curve)
    return out


def certify_threshold(config, num_seeds=1, verbose=True):
    '''
    Solves the truncated MDP for seeds config.seed .. config.seed + num_seeds - 1
    and checks the optimal policy's threshold structure.

    :return: dict seed -> list of violation records
    :raises CertificationFailure: if any seed has a violation
    '''
    reports = {}
    os.makedirs(config.out_dir, exist_ok=True)
    for seed in range(config.seed, config.seed + num_seeds):
        cfg = config.for_agent('value_iteration')
        cfg.seed = seed
        cfg.validate()
        spec = truncated_spec(cfg, build_system(cfg))
        result = value_iteration(spec, tol=cfg.vi_tol, verbose=verbose)
        violations = check_threshold_structure(result, spec)
        write_threshold_report(violations, os.path.join(cfg.out_dir, f'threshold_report_seed{seed}.json'))
        reports[seed] = violations
        if verbose:
            print(f'seed {seed}: {len(violations)} threshold violations')
    failed = [s for s, v in reports.items() if v]
    if failed:
        raise CertificationFailure(f'threshold structure violated for seeds {failed}')
    return reports


def compare_agents(config, agents=('dqn', 'se_dqn', 'ddpg', 'se_ddpg'), verbose=True):
    '''
    Runs each agent on the same generated system and tabulates final
    performance. For each SE agent, also reports how many episodes it took to
    reach its conventional counterpart's final training level.
    '''
    results = {}
    for name in agents:
        results[name] = run_experiment(config.for_agent(name), verbose=verbose)

    rows = []
    for name in agents:
        curve = results[name]['curve']
        row = {'agent': name, 'avg_sum_mse': results[name]['avg_sum_mse'],
               'final_train_mse': float(curve['avg_sum_mse'].iloc[-1]) if len(curve) else np.nan}
        baseline = {'se_dqn': 'dqn', 'se_ddpg': 'ddpg'}.get(name)
        if baseline in results:
            base_curve = results[baseline]['curve']
            level = float(base_curve['avg_sum_mse'].iloc[-1])
            row['episodes_to_baseline'] = first_episode_reaching(curve['avg_sum_mse'], level)
            row['baseline_episodes'] = len(base_curve)
            row['reduction_vs_baseline'] = relative_reduction(results[baseline]['avg_sum_mse'], row['avg_sum_mse'])
        rows.append(row)
    table = pd.DataFrame(rows)
    os.makedirs(config.out_dir, exist_ok=True)
    _write_csv(table, os.path.join(config.out_dir, COMPARISON_FILE))
    if verbose:
        print(table.to_string(index=False))
    return table
