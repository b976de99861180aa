import logging
from typing import Optional

from fare.common import FormatError, Pathlike, load_checkpoint
from fare.models.autoencoder import ConvAutoencoder
from fare.models.interface import NavModel
from fare.models.policy import VibPolicy
from fare.models.rnd import RandomNetworkDistillation

MODEL_KINDS = {
    'policy': VibPolicy,
    'ae': ConvAutoencoder,
    'vae': ConvAutoencoder,
    'rnd': RandomNetworkDistillation,
}


def load_model(filename: Pathlike, expected_kind: Optional[str] = None) -> NavModel:
    '''Load any model from a ``.fwt`` file, dispatching on its kind field.

    The stored layers must match, by name and shape, the layers of a freshly
    initialized model with the same hyper-parameters.
    '''
    manifest, params = load_checkpoint(filename)
    kind = manifest['kind']
    if kind not in MODEL_KINDS:
        raise FormatError(f'{filename}: unknown model kind {kind}')
    if expected_kind is not None and kind != expected_kind:
        raise FormatError(f'{filename} holds a {kind} model, expected {expected_kind}')
    cls = MODEL_KINDS[kind]
    try:
        reference = cls.from_checkpoint(manifest, None)
    except (KeyError, ValueError) as e:
        raise FormatError(f'{filename}: bad {kind} manifest ({e})') from e
    expected = {name: tuple(p.shape) for name, p in reference.params.items()}
    found = {name: tuple(p.shape) for name, p in params.items()}
    if expected != found:
        raise FormatError(f'{filename}: layers do not match a {kind} model with these hyper-parameters')
    logging.info(f'Loaded {kind} model from {filename}')
    return cls.from_checkpoint(manifest, params)
