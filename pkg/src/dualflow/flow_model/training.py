"""Rectified-flow objective, optimizers, training loop and gradient checks."""
import logging
from dataclasses import asdict, dataclass

import numpy as np

from ..noise import NoiseStream

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


def _unpack(batch):
    if hasattr(batch, "x0"):
        return (np.atleast_2d(batch.x0), np.atleast_2d(batch.x1),
                np.atleast_1d(batch.cond))
    x0, x1, cond = zip(*batch) if not isinstance(batch, tuple) else batch
    return np.atleast_2d(np.asarray(x0, float)), np.atleast_2d(np.asarray(x1, float)), \
        np.atleast_1d(np.asarray(cond, np.int64))


def rf_loss(field, batch, t_samples):
    """Mean over pairs and times of ``||(x1 - x0) - v(x_t, t, c)||^2``.

    ``batch`` is a :class:`~dualflow.datasets.PairSet`, a tuple of arrays
    ``(x0, x1, cond)``, or a sequence of ``(x0, x1, cond)`` triples.
    """
    x0, x1, cond = _unpack(batch)
    if len(x1) == 0:
        raise ValueError("empty batch")
    if x0.shape != x1.shape:
        raise ValueError(f"x0 shape {x0.shape} != x1 shape {x1.shape}")
    cond = np.broadcast_to(cond, (len(x1),))
    ts = np.atleast_1d(np.asarray(t_samples, dtype=float))
    if ts.size == 0:
        raise ValueError("no time samples")
    total = 0.0
    for t in ts:
        xt = t * x1 + (1.0 - t) * x0
        r = (x1 - x0) - field.velocity(xt, t, cond)
        total += float(np.sum(r * r))
    return total / (len(x1) * ts.size)


@dataclass
class TrainConfig:
    steps: int = 4000
    batch_size: int = 256
    lr: float = 1e-3
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    resample_noise: bool = True
    cond_dropout: float = 0.0
    window: int = 100

    def to_dict(self):
        return asdict(self)


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        out = {}
        for k in params:
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * grads[k]
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * grads[k] ** 2
            out[k] = params[k] - self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)
        return out


class SGD:
    def __init__(self, params, lr=1e-3, **_):
        self.lr = lr

    def step(self, params, grads):
        return {k: params[k] - self.lr * grads[k] for k in params}


@dataclass
class TrainResult:
    field: object
    history: np.ndarray
    config: TrainConfig

    def trailing_loss(self, window=None, start=False):
        w = window or self.config.window
        h = self.history
        return float(h[:w].mean() if start else h[-w:].mean())


def train(field, pairs, config=None):
    """Fit ``field`` to the rectified-flow regression on ``pairs``.

    Each step samples a minibatch of pairs and one time per example from the
    config's seed. With ``resample_noise`` the stored ``x0`` are replaced by
    fresh draws every step (an endless independent coupling). Returns a new
    field; the input field is left untouched.
    """
    cfg = config or TrainConfig()
    if len(pairs) == 0:
        raise ValueError("dataset is empty")
    if cfg.optimizer not in ("adam", "sgd"):
        raise ValueError(f"unknown optimizer {cfg.optimizer!r}")
    params = {k: v.copy() for k, v in field.params.items()}
    if cfg.steps == 0:
        return TrainResult(field.with_params(params), np.zeros(0), cfg)
    opt_cls = Adam if cfg.optimizer == "adam" else SGD
    opt = opt_cls(params, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.adam_eps)
    stream = NoiseStream(cfg.seed, run=1)
    x0_all, x1_all, cond_all = np.atleast_2d(pairs.x0), np.atleast_2d(pairs.x1), pairs.cond
    n, d = x1_all.shape
    bs = cfg.batch_size
    history = np.empty(cfg.steps)
    work = field.with_params(params)
    for step in range(cfg.steps):
        idx = stream.integers(step, bs, n, label="train.batch")
        t = stream.uniform(step, bs, label="train.t")
        x1 = x1_all[idx]
        x0 = stream.normal(step, (bs, d), label="train.x0") if cfg.resample_noise else x0_all[idx]
        cond = cond_all[idx]
        if cfg.cond_dropout > 0:
            cond = np.where(stream.uniform(step, bs, label="train.drop") < cfg.cond_dropout, 0, cond)
        xt = t[:, None] * x1 + (1.0 - t[:, None]) * x0
        loss, grads = work.loss_and_grad(xt, t, cond, x1 - x0)
        if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
            raise TrainingDiverged(f"non-finite loss or gradient at step {step}")
        history[step] = loss
        params = opt.step(params, grads)
        work = field.with_params(params)
        if step % 1000 == 0:
            log.debug("step %d loss %.5f", step, loss)
    return TrainResult(work, history, cfg)


def grad_check(field, x, t, cond, target, h=1e-4, per_tensor=6, seed=0):
    """Max relative error between the analytic gradient and central differences.

    Checks ``per_tensor`` randomly chosen entries of every parameter tensor.
    """
    _, grads = field.loss_and_grad(x, t, cond, target)
    if not all(np.all(np.isfinite(g)) for g in grads.values()):
        raise FloatingPointError("non-finite analytic gradient")
    stream = NoiseStream(seed, run=2)
    worst = 0.0
    for i, (name, value) in enumerate(field.params.items()):
        k = min(value.size, per_tensor)
        picks = stream.integers(i, k, value.size, label="gradcheck." + name)
        for flat in picks:
            numeric = _central_difference(field, name, int(flat), h, x, t, cond, target)
            analytic = grads[name].reshape(-1)[flat]
            worst = max(worst, abs(analytic - numeric) / max(abs(numeric), 1e-8))
    return worst


def _central_difference(field, name, flat, h, x, t, cond, target):
    def loss_at(delta):
        params = dict(field.params)
        arr = params[name].copy()
        arr.reshape(-1)[flat] += delta
        params[name] = arr
        return field.with_params(params).loss_and_grad(x, t, cond, target)[0]
    return (loss_at(h) - loss_at(-h)) / (2.0 * h)
