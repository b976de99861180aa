#!/usr/bin/env python3

# Copyright 2019-2020 Mobvoi AI Lab, Beijing, China (author: Fangjun Kuang)
# Copyright 2026 Fare authors
# Apache 2.0
import argparse
import logging
import os
import random
import struct
from collections import OrderedDict
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Mapping, Sequence, Tuple, Union

import numpy as np
import torch
from torch import Tensor

Pathlike = Union[str, Path]

WEIGHTS_MAGIC = b'FARE'
WEIGHTS_VERSION = 1


class FormatError(ValueError):
    """A data, weights or band file is corrupt or of an unsupported version."""


def setup_logger(log_filename: Pathlike, log_level: str = 'info', use_console: bool = True) -> None:
    now = datetime.now()
    date_time = now.strftime('%Y-%m-%d-%H-%M-%S')
    log_filename = '{}-{}'.format(log_filename, date_time)
    os.makedirs(os.path.dirname(log_filename), exist_ok=True)

    formatter = '%(asctime)s %(levelname)s [%(filename)s:%(lineno)d] %(message)s'

    level = logging.ERROR
    if log_level == 'debug':
        level = logging.DEBUG
    elif log_level == 'info':
        level = logging.INFO
    elif log_level == 'warning':
        level = logging.WARNING
    logging.basicConfig(filename=log_filename,
                        format=formatter,
                        level=level,
                        filemode='w',
                        force=True)
    if use_console:
        console = logging.StreamHandler()
        console.setLevel(level)
        console.setFormatter(logging.Formatter(formatter))
        logging.getLogger('').addHandler(console)


def fix_random_seed(seed: int) -> None:
    random.seed(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)


def str2bool(v):
    if isinstance(v, bool):
        return v
    if v.lower() in ('yes', 'true', 't', 'y', '1'):
        return True
    elif v.lower() in ('no', 'false', 'f', 'n', '0'):
        return False
    else:
        raise argparse.ArgumentTypeError('Boolean value expected.')


def describe(params: Mapping[str, Tensor], title: str = 'Model parameters summary:') -> int:
    logging.info('=' * 80)
    logging.info(title)
    logging.info('=' * 80)
    total = 0
    for name, param in params.items():
        num_params = param.numel()
        total += num_params
        logging.info(f'* {name}: {num_params:>{80 - len(name) - 4}}')
    logging.info('=' * 80)
    logging.info(f'Total: {total}')
    logging.info('=' * 80)
    return total


def write_container(filename: Pathlike,
                    magic: bytes,
                    manifest: Sequence[Tuple[str, str]],
                    arrays: Sequence[np.ndarray]) -> None:
    '''Write a `magic` + manifest + float32 blob container.

    The layout is: 4 magic bytes, a little-endian uint32 with the manifest
    length in bytes, the UTF-8 manifest (one ``key=value`` per line), then the
    arrays flattened in order as little-endian 32-bit floats.
    '''
    assert len(magic) == 4
    text = ''.join(f'{k}={v}\n' for k, v in manifest).encode('utf-8')
    with open(filename, 'wb') as f:
        f.write(magic)
        f.write(struct.pack('<I', len(text)))
        f.write(text)
        for a in arrays:
            f.write(np.ascontiguousarray(a, dtype='<f4').tobytes())


def read_container(filename: Pathlike, magic: bytes) -> Tuple['OrderedDict[str, str]', np.ndarray]:
    '''Inverse of :func:`write_container`. Duplicate manifest keys keep the
    last value; keys are returned in file order.'''
    filename = Path(filename)
    if not filename.is_file():
        raise FileNotFoundError(f'No such file: {filename}')
    data = filename.read_bytes()
    if len(data) < 8 or data[:4] != magic:
        raise FormatError(f'{filename}: bad magic, expected {magic!r}')
    (n,) = struct.unpack('<I', data[4:8])
    if 8 + n > len(data):
        raise FormatError(f'{filename}: truncated manifest')
    try:
        text = data[8:8 + n].decode('utf-8')
    except UnicodeDecodeError as e:
        raise FormatError(f'{filename}: manifest is not UTF-8') from e
    manifest = OrderedDict()
    for line in text.splitlines():
        if not line:
            continue
        key, sep, value = line.partition('=')
        if not sep:
            raise FormatError(f'{filename}: malformed manifest line {line!r}')
        manifest[key] = value
    blob = data[8 + n:]
    if len(blob) % 4 != 0:
        raise FormatError(f'{filename}: blob length {len(blob)} is not a multiple of 4')
    return manifest, np.frombuffer(blob, dtype='<f4')


def save_checkpoint(filename: Pathlike,
                    kind: str,
                    params: Mapping[str, Tensor],
                    hparams: Mapping[str, object]) -> None:
    '''Serialize model weights to a ``.fwt`` file.'''
    manifest: List[Tuple[str, str]] = [('version', str(WEIGHTS_VERSION)), ('kind', kind)]
    manifest += [(k, str(v)) for k, v in hparams.items()]
    manifest.append(('num_layers', str(len(params))))
    for i, (name, p) in enumerate(params.items()):
        shape = 'x'.join(str(s) for s in p.shape)
        manifest.append((f'layer.{i}', f'{name}:{shape}'))
    logging.info(f'Save {kind} weights to {filename}')
    write_container(filename, WEIGHTS_MAGIC, manifest,
                    [p.detach().cpu().numpy() for p in params.values()])


def load_checkpoint(filename: Pathlike) -> Tuple[Dict[str, str], 'OrderedDict[str, Tensor]']:
    '''Return the manifest and the float64 parameters stored in a ``.fwt`` file.'''
    logging.info('load checkpoint from {}'.format(filename))
    manifest, blob = read_container(filename, WEIGHTS_MAGIC)
    missing_keys = {'version', 'kind', 'num_layers'} - set(manifest.keys())
    if missing_keys:
        raise FormatError(f'Missing keys in checkpoint: {missing_keys}')
    if int(manifest['version']) != WEIGHTS_VERSION:
        raise FormatError(f'{filename}: unsupported version {manifest["version"]}')

    params = OrderedDict()
    offset = 0
    for i in range(int(manifest['num_layers'])):
        name, _, shape_str = manifest[f'layer.{i}'].rpartition(':')
        shape = tuple(int(s) for s in shape_str.split('x')) if shape_str else ()
        size = int(np.prod(shape)) if shape else 1
        if offset + size > blob.size:
            raise FormatError(f'{filename}: blob too short for layer {name}')
        params[name] = torch.from_numpy(blob[offset:offset + size].astype(np.float64)).reshape(shape)
        offset += size
    if offset != blob.size:
        raise FormatError(f'{filename}: {blob.size - offset} trailing values after the last layer')
    return dict(manifest), params


def save_training_info(filename: Pathlike,
                       model_path: Pathlike,
                       num_epochs: int,
                       learning_rate: float,
                       objf: float,
                       best_objf: float,
                       best_epoch: int) -> None:
    with open(filename, 'w') as f:
        f.write('model_path: {}\n'.format(model_path))
        f.write('epochs: {}\n'.format(num_epochs))
        f.write('learning rate: {}\n'.format(learning_rate))
        f.write('objf: {}\n'.format(objf))
        f.write('best objf: {}\n'.format(best_objf))
        f.write('best epoch: {}\n'.format(best_epoch))

    logging.info('write training info to {}'.format(filename))


def write_config_echo(filename: Pathlike, config: Mapping[str, object]) -> None:
    with open(filename, 'w') as f:
        for key in sorted(config):
            f.write(f'{key}={config[key]}\n')


def num_workers() -> int:
    '''Worker processes for trial-level parallelism: ``FARE_THREADS`` when
    set, otherwise the number of cores.'''
    value = os.environ.get('FARE_THREADS')
    if value:
        try:
            n = int(value)
        except ValueError:
            raise ValueError(f'FARE_THREADS must be an integer, got {value!r}')
        if n < 1:
            raise ValueError(f'FARE_THREADS must be positive, got {n}')
        return n
    return os.cpu_count() or 1
