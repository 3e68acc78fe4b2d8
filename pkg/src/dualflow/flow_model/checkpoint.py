"""JSON checkpoints for trainable fields."""
import json
from pathlib import Path

import numpy as np

from .attention import AttentionField
from .dense import DenseField

FORMAT_VERSION = 1


def checkpoint_dict(field, seed=None):
    return {
        "format_version": FORMAT_VERSION,
        "field_kind": field.kind,
        "state_dim": field.state_dim,
        "architecture": field.architecture,
        "seed": field.seed if seed is None else int(seed),
        "parameters": {k: v.tolist() for k, v in field.params.items()},
    }


def save_checkpoint(field, path, seed=None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(checkpoint_dict(field, seed)))
    return path


def field_from_dict(doc):
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(f"checkpoint format_version {version!r} != {FORMAT_VERSION}")
    params = {k: np.asarray(v, dtype=float) for k, v in doc["parameters"].items()}
    arch = dict(doc["architecture"])
    if doc["field_kind"] == "dense":
        return DenseField(doc["state_dim"], hidden=arch["hidden"], n_freq=arch["n_freq"],
                          cond_dim=arch["cond_dim"], seed=doc["seed"], params=params)
    if doc["field_kind"] == "attention":
        field = AttentionField(seed=doc["seed"], params=params, **arch)
        if field.state_dim != doc["state_dim"]:
            raise ValueError("state_dim does not match the attention architecture")
        return field
    raise ValueError(f"unknown field_kind {doc['field_kind']!r}")


def load_checkpoint(path):
    return field_from_dict(json.loads(Path(path).read_text()))
