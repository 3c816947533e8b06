"""Versioned text checkpoint format with bit-exact float round-trips.

Layout::

    #v1 latent-evidence checkpoint
    config <json ModelConfig>
    extras <json>
    tensor <name> <comma-separated shape or '-' for scalars>
    <space-separated float.hex values>
    ...

Values are written with ``float.hex`` so reading them back is exact.
"""

import json

import numpy as np

from .errors import ConfigurationError
from .io import atomic_write_text
from .model import ModelConfig, ModelParams

HEADER = "#v1 latent-evidence checkpoint"


def dumps_checkpoint(params):
    lines = [HEADER,
             "config " + json.dumps(params.config.to_dict(), sort_keys=True),
             "extras " + json.dumps(params.extras, sort_keys=True)]
    for name in sorted(params.values):
        arr = params.values[name]
        shape = ",".join(str(d) for d in arr.shape) if arr.ndim else "-"
        lines.append(f"tensor {name} {shape}")
        lines.append(" ".join(float(x).hex() for x in arr.reshape(-1)))
    return "\n".join(lines) + "\n"


def loads_checkpoint(text):
    lines = text.splitlines()
    if not lines or lines[0] != HEADER:
        raise ConfigurationError("not a v1 checkpoint file")
    try:
        config = ModelConfig.from_dict(json.loads(lines[1].removeprefix("config ")))
        extras = json.loads(lines[2].removeprefix("extras "))
        values = {}
        i = 3
        while i < len(lines):
            _, name, shape = lines[i].split(" ")
            dims = () if shape == "-" else tuple(int(d) for d in shape.split(","))
            body = lines[i + 1].split()
            flat = np.array([float.fromhex(tok) for tok in body], dtype=float)
            values[name] = flat.reshape(dims)
            i += 2
    except (IndexError, ValueError, KeyError) as exc:
        raise ConfigurationError(f"malformed checkpoint: {exc}") from exc
    return ModelParams(values, config, extras)


def save_checkpoint(path, params):
    atomic_write_text(path, dumps_checkpoint(params))


def load_checkpoint(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return loads_checkpoint(fh.read())
    except FileNotFoundError as exc:
        raise ConfigurationError(f"checkpoint not found: {path}") from exc
