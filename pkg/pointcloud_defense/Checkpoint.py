"""
This module exposes the checkpoint container shared by the classifier and
the upsampler: a versioned JSON document holding every tensor with its shape.

Example:
        save_checkpoint('model.json', 'classifier', params.tensors, meta)
        kind, tensors, meta = load_checkpoint('model.json')
"""

import json
import os

import numpy as np

from .Errors import ContractError

FORMAT = 'pointcloud-defense-checkpoint'
VERSION = 1


def save_checkpoint(path, kind, tensors, meta=None):
    """
    Writes tensors to a JSON checkpoint

    Args:
        path (str): destination file
        kind (str): 'classifier' or 'upsampler'
        tensors (dict): name -> numpy array
        meta (dict): JSON-serializable extra information
    """
    body = {
        'format': FORMAT,
        'version': VERSION,
        'kind': kind,
        'meta': meta or {},
        'tensors': {
            name: {'shape': list(np.shape(value)), 'data': np.asarray(value, dtype=np.float64).ravel().tolist()}
            for name, value in sorted(tensors.items())
        },
    }
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, 'w') as f:
        json.dump(body, f)


def load_checkpoint(path, kind=None):
    """
    Reads a checkpoint written by save_checkpoint

    Args:
        path (str): checkpoint file
        kind (str): expected kind; checked when given

    Returns:
        tuple: (kind, tensors dict, meta dict)

    Raises:
        ContractError: if the file is not a checkpoint of the expected kind
    """
    if not os.path.exists(path):
        raise ContractError('checkpoint "' + str(path) + '" does not exist')
    with open(path) as f:
        body = json.load(f)
    if body.get('format') != FORMAT:
        raise ContractError('"' + str(path) + '" is not a toolkit checkpoint')
    if body.get('version') != VERSION:
        raise ContractError('unsupported checkpoint version ' + str(body.get('version')))
    if kind is not None and body.get('kind') != kind:
        raise ContractError('expected a ' + kind + ' checkpoint, found ' + str(body.get('kind')))
    tensors = {
        name: np.array(entry['data'], dtype=np.float64).reshape(entry['shape'])
        for name, entry in body['tensors'].items()
    }
    return body['kind'], tensors, body.get('meta', {})
