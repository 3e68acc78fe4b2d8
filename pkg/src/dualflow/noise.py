"""Counter-based random streams.

Every draw is a pure function of ``(seed, label, run, step, index)``: no
generator state is carried between calls, so streams can be consumed in any
order or in parallel and still reproduce bit-for-bit. This is the only
entropy source in the package.
"""
import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from . import kernels


def stream_key(seed, label, run=0, step=0):
    """64-bit key for one ``(seed, label, run, step)`` cell."""
    payload = struct.pack("<qqq", int(seed), int(run), int(step)) + label.encode()
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")


@dataclass(frozen=True)
class NoiseStream:
    seed: int
    run: int = 0

    def normal(self, step, shape, label="noise"):
        shape = _as_shape(shape)
        n = int(np.prod(shape, dtype=np.int64))
        key = stream_key(self.seed, label, self.run, step)
        return kernels.counter_normals(key, 0, n).reshape(shape)

    def uniform(self, step, shape, label="uniform"):
        shape = _as_shape(shape)
        n = int(np.prod(shape, dtype=np.int64))
        key = stream_key(self.seed, label, self.run, step)
        return kernels.counter_uniforms(key, 0, n).reshape(shape)

    def integers(self, step, shape, high, label="index"):
        """Integers in ``[0, high)`` by flooring scaled uniforms."""
        u = self.uniform(step, shape, label=label)
        return np.minimum((u * high).astype(np.int64), high - 1)

    def child(self, run):
        return NoiseStream(self.seed, run)


def draw(seed, run, step, shape, label="noise"):
    """Standard-normal array for one stream cell."""
    return NoiseStream(seed, run).normal(step, shape, label=label)


def _as_shape(shape):
    if isinstance(shape, (int, np.integer)):
        return (int(shape),)
    return tuple(int(s) for s in shape)
