"""Guidance combination and an evaluation-counting wrapper."""
from .base import NULL


def cfg_velocity(field, x, t, cond, scale, null=NULL):
    """``v_null + scale * (v_cond - v_null)``; scales 1 and 0 take one evaluation."""
    if scale == 1:
        return field.velocity(x, t, cond)
    if scale == 0:
        return field.velocity(x, t, null)
    v_null = field.velocity(x, t, null)
    return v_null + scale * (field.velocity(x, t, cond) - v_null)


class CountingField:
    """Proxy that counts velocity evaluations (one per call, batch or not)."""

    def __init__(self, field):
        self.field = field
        self.calls = 0
        self.injected_calls = 0

    def __getattr__(self, name):
        return getattr(self.field, name)

    def velocity(self, x, t, cond=NULL):
        self.calls += 1
        return self.field.velocity(x, t, cond)

    __call__ = velocity

    def velocity_injected(self, x, kv_x, t, cond=NULL):
        self.calls += 1
        self.injected_calls += 1
        return self.field.velocity_injected(x, kv_x, t, cond)

    def set_noise(self, x0):
        self.field.set_noise(x0)

    def reset(self):
        self.calls = 0
        self.injected_calls = 0
