"""Closed-form velocity fields used as exact references."""
import numpy as np

from .base import FieldError, VelocityField


class _TargetTable:
    def __init__(self, targets, state_dim):
        self.targets = {int(k): np.asarray(v, dtype=float) for k, v in targets.items()}
        for k, v in self.targets.items():
            if v.shape != (state_dim,):
                raise FieldError(f"target for condition {k} has shape {v.shape}")

    def lookup(self, cond):
        try:
            return np.stack([self.targets[int(c)] for c in cond])
        except KeyError as exc:
            raise FieldError(f"no target for condition {exc.args[0]}") from None


class PerfectCoupling(VelocityField):
    """``v(x, t, c) = target[c] - x0`` for the current shared noise ``x0``.

    This is the velocity of a perfectly rectified model on the straight path
    from ``x0`` to ``target[c]``; it ignores ``x`` and ``t``.
    """

    kind = "perfect_coupling"

    def __init__(self, targets, state_dim=None):
        first = np.asarray(next(iter(targets.values())))
        self.state_dim = int(state_dim or first.shape[-1])
        self._table = _TargetTable(targets, self.state_dim)
        self.noise = None

    @property
    def targets(self):
        return self._table.targets

    def set_noise(self, x0):
        x0 = np.asarray(x0, dtype=float)
        if x0.shape[-1] != self.state_dim or not np.all(np.isfinite(x0)):
            raise FieldError("shared noise must be finite with the field's state dim")
        self.noise = x0.copy()

    def _velocity(self, x, t, cond):
        if self.noise is None:
            raise FieldError("perfect_coupling oracle evaluated before its shared noise was set")
        return self._table.lookup(cond) - np.broadcast_to(self.noise, x.shape)


class DeltaTarget(VelocityField):
    """Exact flow onto a point mass: ``v = (a - x) / max(1 - t, eps)``."""

    kind = "delta_target"

    def __init__(self, targets, eps=1e-3, state_dim=None):
        if eps <= 0:
            raise ValueError("eps must be positive")
        first = np.asarray(next(iter(targets.values())))
        self.state_dim = int(state_dim or first.shape[-1])
        self._table = _TargetTable(targets, self.state_dim)
        self.eps = float(eps)

    def _velocity(self, x, t, cond):
        return (self._table.lookup(cond) - x) / np.maximum(1.0 - t, self.eps)[:, None]


class GaussianTarget(VelocityField):
    """Exact marginal velocity for isotropic Gaussian data ``N(mu, sigma^2 I)``.

    With ``x_t = t x1 + (1 - t) x0`` and ``x0 ~ N(0, I)`` the conditional mean
    of ``x1 - x0`` given ``x_t`` is affine in ``x_t``. Trajectories of the
    exact flow are ``x_t = t mu + s(t) x0`` with ``s(t)^2 = t^2 sigma^2 + (1-t)^2``.
    """

    kind = "gaussian_target"

    def __init__(self, targets, state_dim=None):
        first = np.asarray(next(iter(targets.values()))[0])
        self.state_dim = int(state_dim or first.shape[-1])
        self.mu = {int(k): np.broadcast_to(np.asarray(m, dtype=float), (self.state_dim,))
                   for k, (m, _) in targets.items()}
        self.sigma = {int(k): float(s) for k, (_, s) in targets.items()}
        if any(s <= 0 for s in self.sigma.values()):
            raise ValueError("sigma must be positive")

    def _params(self, cond):
        try:
            mu = np.stack([self.mu[int(c)] for c in cond])
            sig = np.array([self.sigma[int(c)] for c in cond])
        except KeyError as exc:
            raise FieldError(f"no target for condition {exc.args[0]}") from None
        return mu, sig

    def _velocity(self, x, t, cond):
        mu, sig = self._params(cond)
        s2 = t ** 2 * sig ** 2 + (1.0 - t) ** 2
        gain = (t * sig ** 2 - (1.0 - t)) / s2
        return mu + gain[:, None] * (x - t[:, None] * mu)

    def exact_state(self, x0, t, cond):
        """Closed-form position at time ``t`` of the trajectory starting at ``x0``."""
        mu, sig = self._params(np.atleast_1d(cond))
        s = np.sqrt(t ** 2 * sig ** 2 + (1.0 - t) ** 2)
        out = t * mu + s[:, None] * np.atleast_2d(x0)
        return out[0] if np.ndim(x0) == 1 else out
