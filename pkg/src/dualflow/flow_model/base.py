"""Velocity-field protocol, condition embeddings and time features.

Every field is evaluated in data-fraction time: ``t = 0`` is pure noise and
``t = 1`` is clean data. Callers holding a noise-level time ``u`` pass
``1 - u``.
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..noise import NoiseStream

NULL = 0
COND_DIM = 8
N_FREQ = 8
_EMBED_SEED = 0x5EED


class FieldError(ValueError):
    pass


@lru_cache(maxsize=None)
def _embedding(cond_id, dim):
    if cond_id == NULL:
        vec = np.zeros(dim)
    else:
        vec = NoiseStream(_EMBED_SEED).normal(cond_id, dim, label="condition")
    vec.setflags(write=False)
    return vec


def condition_embedding(cond, dim=COND_DIM):
    """Embedding of one id (``(dim,)``) or an id array (``(n, dim)``)."""
    ids = np.asarray(cond)
    if ids.ndim == 0:
        return _embedding(_check_id(ids), dim)
    return np.stack([_embedding(_check_id(i), dim) for i in ids.reshape(-1)])


def _check_id(i):
    i = int(i)
    if i < 0:
        raise FieldError(f"condition id must be non-negative, got {i}")
    return i


@dataclass(frozen=True)
class Condition:
    id: int

    @property
    def embedding(self):
        return condition_embedding(self.id)

    def __index__(self):
        return self.id


def time_features(t, n_freq=N_FREQ):
    """Sinusoidal features ``[sin(w t), cos(w t)]`` with ``w`` spanning pi/2 .. 4 pi."""
    t = np.asarray(t, dtype=float)
    freqs = np.pi * 2.0 ** np.linspace(-1.0, 2.0, n_freq)
    arg = t[..., None] * freqs
    return np.concatenate([np.sin(arg), np.cos(arg)], axis=-1)


def broadcast_inputs(x, t, cond):
    """Return ``(x2d, t1d, cond1d, squeeze)`` for batched evaluation."""
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    x2 = x[None, :] if squeeze else x
    n = x2.shape[0]
    t1 = np.broadcast_to(np.asarray(t, dtype=float), (n,))
    c1 = np.broadcast_to(np.asarray(cond, dtype=np.int64), (n,))
    return x2, t1, c1, squeeze


class VelocityField:
    """Maps ``(state, data-fraction time, condition id)`` to a velocity.

    Subclasses implement ``_velocity`` on 2-D batches. ``velocity`` accepts a
    single state ``(d,)`` or a batch ``(n, d)``; ``t`` and ``cond`` may be
    scalars or per-row arrays.
    """

    kind = "abstract"
    state_dim: int

    def velocity(self, x, t, cond=NULL):
        x2, t1, c1, squeeze = self._prepare(x, t, cond)
        v = self._velocity(x2, t1, c1)
        return v[0] if squeeze else v

    __call__ = velocity

    def set_noise(self, x0):
        """Hook for fields that depend on the current shared noise; no-op here."""

    def _prepare(self, x, t, cond):
        x2, t1, c1, squeeze = broadcast_inputs(x, t, cond)
        if x2.shape[-1] != self.state_dim:
            raise FieldError(f"state dim {x2.shape[-1]} != field dim {self.state_dim}")
        if not np.all(np.isfinite(x2)):
            raise FieldError("non-finite state")
        if np.any(t1 < 0.0) or np.any(t1 > 1.0) or not np.all(np.isfinite(t1)):
            raise FieldError("time outside [0, 1]")
        return x2, t1, c1, squeeze

    def _velocity(self, x, t, cond):
        raise NotImplementedError
