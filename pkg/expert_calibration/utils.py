"""
The utils module contains a number of utility functions used by other
modules: order statistics, seed resolution, and the reading and hashing of
configuration files.
"""

from math import ceil
import hashlib
import json
import os

import numpy as np

SEED_ENV = 'SOCO_SEED'


def nearest_rank(values, percentile):
    """
    Returns the nearest-rank percentile of a list of values, i.e., the
    smallest value such that at least ``percentile`` percent of the values
    are less than or equal to it.

    >>> nearest_rank([1.2, 2.0], 50)
    1.2
    >>> nearest_rank([3, 1, 2], 100)
    3
    """
    if not 0 < percentile <= 100:
        raise ValueError("percentile must be in (0, 100], got %r" %
                         percentile)
    if len(values) == 0:
        raise ValueError("Cannot take a percentile of no values.")
    ordered = sorted(values)
    # 99.9 / 100 * 1000 is not exactly 999 in floating point
    rank = int(ceil(percentile * len(ordered) / 100.0 - 1e-9))
    return ordered[max(rank, 1) - 1]


def resolve_seed(seed=None, default=0):
    """
    Returns the given seed, or the value of the ``SOCO_SEED`` environment
    variable when no seed is given, or the default.
    """
    if seed is not None:
        return int(seed)
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip() != '':
        try:
            return int(env)
        except ValueError:
            raise ValueError("%s must be an integer, got %r" % (SEED_ENV,
                                                               env))
    return default


def load_config(path):
    """
    Reads a JSON configuration file. The result is a dict whose optional
    sections are ``cost_model``, ``train``, ``pureml``, ``augment``,
    ``renewables``, ``shortage`` and ``eval``.
    """
    if path is None:
        return {}
    with open(path) as dat:
        config = json.load(dat)
    if not isinstance(config, dict):
        raise ValueError("%s must contain a JSON object" % path)
    return config


def merge_config(defaults, config, overrides):
    """
    Merges three dicts with increasing precedence. Keys whose override value
    is None are ignored so that unset command line flags do not hide the
    config file.

    >>> merge_config({'a': 1, 'b': 2}, {'b': 3}, {'a': None, 'c': 4})
    {'a': 1, 'b': 3, 'c': 4}
    """
    merged = dict(defaults)
    merged.update(config or {})
    merged.update((k, v) for k, v in (overrides or {}).items()
                  if v is not None)
    return merged


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    return value


def config_hash(config):
    """
    Returns a stable SHA-256 hex digest of a configuration dict.
    """
    text = json.dumps(_jsonable(config), sort_keys=True,
                      separators=(',', ':'))
    return hashlib.sha256(text.encode('utf-8')).hexdigest()


def write_manifest(path, command, config, outputs=()):
    """
    Writes a JSON manifest with the effective configuration of a command,
    its hash and the files it produced.
    """
    manifest = {'command': command, 'config': _jsonable(config),
                'config_hash': config_hash(config),
                'outputs': sorted(outputs)}
    with open(path, 'w') as out:
        json.dump(manifest, out, sort_keys=True, indent=2)
        out.write('\n')
    return path


def check_writable(path, force=False):
    """
    Refuses to overwrite an existing file unless forced.
    """
    if os.path.exists(path) and not force:
        raise FileExistsError("%s exists, use --force to overwrite" % path)
