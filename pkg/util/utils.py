import torch
import numpy as np
import os
import random
import argparse

try:
    import wandb
except ImportError as e:
    pass

CHECKPOINT_SCHEMA_VERSION = 1


def set_seed(seed):
    random.seed(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)


def summary(networks):
    """Print model summary for a dict of named networks."""
    print()
    print('Model Summary')
    print('---------------------------------------------------------------')
    for name, network in networks.items():
        print(name + ':', network)
    print('---------------------------------------------------------------')
    print()
    for name, network in networks.items():
        print(f'{name} layer dims:', getattr(network, 'layer_dims', None))
        print(f'{name} parameters:', sum(p.numel() for p in network.parameters() if p.requires_grad))
    print('---------------------------------------------------------------')
    print()

######### Saving/Loading checkpoints ############
def save_checkpoint(path, networks, optimizers=None, schedulers=None, verbose=True, **meta):
    '''
    Saves named networks with their optimizer/scheduler state.

    :param networks: dict name -> MLP
    :param optimizers: dict name -> torch optimizer (same keys as networks)
    :param meta: extra picklable fields stored alongside (agent, episode, N, M, ...)
    '''
    state = {
        'schema_version': CHECKPOINT_SCHEMA_VERSION,
        'layer_dims': {k: list(net.layer_dims) for k, net in networks.items()},
        'network_state_dict': {k: net.state_dict() for k, net in networks.items()},
    }
    if optimizers:
        state['optimizer'] = {k: opt.state_dict() for k, opt in optimizers.items()}
    if schedulers:
        state['scheduler'] = {k: sch.state_dict() for k, sch in schedulers.items()}
    state.update(meta)
    torch.save(state, path)
    if verbose:
        print('Saved checkpoint to', path)


def load_checkpoint(path, networks=None, optimizers=None, schedulers=None, verbose=True):
    '''Loads a checkpoint; restores state into whichever objects are passed.'''
    if verbose:
        print('Loading checkpoint from', path)
    checkpoint = torch.load(path, map_location=torch.device('cpu'), weights_only=False)
    assert checkpoint.get('schema_version') == CHECKPOINT_SCHEMA_VERSION, \
        f'Unsupported checkpoint schema {checkpoint.get("schema_version")}'

    for k, net in (networks or {}).items():
        net.load_state_dict(checkpoint['network_state_dict'][k])
    for k, opt in (optimizers or {}).items():
        opt.load_state_dict(checkpoint['optimizer'][k])
    for k, sch in (schedulers or {}).items():
        sch.load_state_dict(checkpoint['scheduler'][k])
    return checkpoint


def initialize_wandb(config, wandb_api_key_path=None, wandb_kwargs=None):
    if wandb_api_key_path is not None:
        with open(wandb_api_key_path, "r") as f:
            os.environ["WANDB_API_KEY"] = f.read().strip()

    wandb.init(**(wandb_kwargs or {}))
    wandb.config.update(config)


def _parse_scalar(text):
    if text in ('True', 'true'):
        return True
    if text in ('False', 'false'):
        return False
    for kind in (int, float):
        try:
            return kind(text)
        except ValueError:
            pass
    return text


class ParseKwargs(argparse.Action):
    '''key=value pairs into a dict; numbers and booleans are converted, commas make lists.'''
    def __call__(self, parser, namespace, values, option_string=None):
        setattr(namespace, self.dest, dict())
        for value in values:
            if '=' not in value:
                parser.error(f'{option_string} expects key=value, got {value!r}')
            key, value_str = value.split('=', 1)
            if ',' in value_str:
                processed_val = [_parse_scalar(v) for v in value_str.split(',') if v]
            else:
                processed_val = _parse_scalar(value_str)
            getattr(namespace, self.dest)[key] = processed_val
