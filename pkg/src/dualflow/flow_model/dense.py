"""Dense tanh network velocity field with a hand-written backward pass."""
import numpy as np

from ..noise import NoiseStream
from .base import COND_DIM, N_FREQ, VelocityField, condition_embedding, time_features


def dense_shapes(state_dim, hidden=(128, 128, 128), n_freq=N_FREQ, cond_dim=COND_DIM):
    sizes = [state_dim + 2 * n_freq + cond_dim, *hidden, state_dim]
    shapes = {}
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        shapes[f"W{i}"] = (fan_in, fan_out)
        shapes[f"b{i}"] = (fan_out,)
    return shapes


def init_dense(state_dim, hidden=(128, 128, 128), n_freq=N_FREQ, cond_dim=COND_DIM, seed=0):
    """Fan-in scaled uniform weights and zero biases."""
    stream = NoiseStream(seed)
    params = {}
    for i, (name, shape) in enumerate(dense_shapes(state_dim, hidden, n_freq, cond_dim).items()):
        if name.startswith("W"):
            bound = 1.0 / np.sqrt(shape[0])
            params[name] = bound * (2.0 * stream.uniform(i, shape, label="init.dense") - 1.0)
        else:
            params[name] = np.zeros(shape)
    return params


class DenseField(VelocityField):
    kind = "dense"

    def __init__(self, state_dim, hidden=(128, 128, 128), n_freq=N_FREQ,
                 cond_dim=COND_DIM, seed=0, params=None):
        self.state_dim = int(state_dim)
        self.hidden = tuple(int(h) for h in hidden)
        self.n_freq = int(n_freq)
        self.cond_dim = int(cond_dim)
        self.seed = int(seed)
        if params is None:
            params = init_dense(self.state_dim, self.hidden, self.n_freq, self.cond_dim, seed)
        expected = dense_shapes(self.state_dim, self.hidden, self.n_freq, self.cond_dim)
        if {k: np.shape(v) for k, v in params.items()} != expected:
            raise ValueError("parameter shapes do not match the architecture")
        self.params = {k: np.asarray(v, dtype=float) for k, v in params.items()}
        self.n_layers = len(self.hidden) + 1

    @property
    def architecture(self):
        return {"hidden": list(self.hidden), "n_freq": self.n_freq, "cond_dim": self.cond_dim}

    def with_params(self, params):
        return DenseField(self.state_dim, self.hidden, self.n_freq, self.cond_dim,
                          self.seed, params)

    def param_count(self):
        return sum(v.size for v in self.params.values())

    def _inputs(self, x, t, cond):
        return np.concatenate(
            [x, time_features(t, self.n_freq), condition_embedding(cond, self.cond_dim)], axis=1)

    def _forward(self, x, t, cond):
        acts = [self._inputs(x, t, cond)]
        p = self.params
        for i in range(self.n_layers - 1):
            acts.append(np.tanh(acts[-1] @ p[f"W{i}"] + p[f"b{i}"]))
        last = self.n_layers - 1
        return acts[-1] @ p[f"W{last}"] + p[f"b{last}"], acts

    def _velocity(self, x, t, cond):
        return self._forward(x, t, cond)[0]

    def loss_and_grad(self, x, t, cond, target):
        """Mean over the batch of ``||v - target||^2`` and its parameter gradient."""
        x2, t1, c1, _ = self._prepare(x, t, cond)
        target = np.asarray(target, dtype=float).reshape(x2.shape)
        out, acts = self._forward(x2, t1, c1)
        resid = out - target
        n = x2.shape[0]
        loss = float(np.sum(resid * resid) / n)
        grads = {}
        delta = 2.0 * resid / n
        p = self.params
        for i in range(self.n_layers - 1, -1, -1):
            grads[f"W{i}"] = acts[i].T @ delta
            grads[f"b{i}"] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ p[f"W{i}"].T) * (1.0 - acts[i] ** 2)
        return loss, {k: grads[k] for k in p}
