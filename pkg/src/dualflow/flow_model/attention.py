"""Patch-token attention velocity field for square images.

One single-head self-attention layer with a residual connection, followed by
a per-token tanh MLP that maps each token back to its patch velocity. The
key/value stream can be taken from a second image (attention injection).
"""
import numpy as np

from ..noise import NoiseStream
from .base import (COND_DIM, N_FREQ, FieldError, VelocityField, condition_embedding,
                   time_features)


def tokenize(x, side=16, patch=4):
    """``(n, side*side)`` images to ``(n, tokens, patch*patch)`` row-major patches."""
    x = np.asarray(x, dtype=float)
    g = side // patch
    lead = x.shape[:-1]
    img = x.reshape(*lead, g, patch, g, patch)
    img = np.moveaxis(img, -3, -2)  # (..., g_row, g_col, p_row, p_col)
    return img.reshape(*lead, g * g, patch * patch)


def detokenize(tokens, side=16, patch=4):
    tokens = np.asarray(tokens, dtype=float)
    g = side // patch
    lead = tokens.shape[:-2]
    img = tokens.reshape(*lead, g, g, patch, patch)
    img = np.moveaxis(img, -2, -3)
    return img.reshape(*lead, side * side)


def softmax_rows(s):
    z = s - s.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def attention_shapes(side=16, patch=4, width=32, mlp=64, n_freq=N_FREQ, cond_dim=COND_DIM):
    tokens = (side // patch) ** 2
    pix = patch * patch
    return {
        "We": (pix, width), "be": (width,), "pos": (tokens, width),
        "Wc": (2 * n_freq + cond_dim, width), "bc": (width,),
        "Wq": (width, width), "Wk": (width, width), "Wv": (width, width),
        "W1": (width, mlp), "b1": (mlp,), "W2": (mlp, pix), "b2": (pix,),
    }


def init_attention(seed=0, **arch):
    stream = NoiseStream(seed)
    params = {}
    for i, (name, shape) in enumerate(attention_shapes(**arch).items()):
        if name.startswith("b"):
            params[name] = np.zeros(shape)
        else:
            bound = 1.0 / np.sqrt(shape[0]) if name != "pos" else 0.1
            params[name] = bound * (2.0 * stream.uniform(i, shape, label="init.attention") - 1.0)
    return params


class AttentionField(VelocityField):
    kind = "attention"

    def __init__(self, side=16, patch=4, width=32, mlp=64, n_freq=N_FREQ,
                 cond_dim=COND_DIM, seed=0, params=None):
        if side % patch:
            raise ValueError("patch size must divide the image side")
        self.side, self.patch, self.width, self.mlp = int(side), int(patch), int(width), int(mlp)
        self.n_freq, self.cond_dim, self.seed = int(n_freq), int(cond_dim), int(seed)
        self.state_dim = self.side * self.side
        self.n_tokens = (self.side // self.patch) ** 2
        arch = self.architecture
        if params is None:
            params = init_attention(seed, **arch)
        if {k: np.shape(v) for k, v in params.items()} != attention_shapes(**arch):
            raise ValueError("parameter shapes do not match the architecture")
        self.params = {k: np.asarray(v, dtype=float) for k, v in params.items()}

    @property
    def architecture(self):
        return {"side": self.side, "patch": self.patch, "width": self.width, "mlp": self.mlp,
                "n_freq": self.n_freq, "cond_dim": self.cond_dim}

    def with_params(self, params):
        return AttentionField(seed=self.seed, params=params, **self.architecture)

    def param_count(self):
        return sum(v.size for v in self.params.values())

    def tokenize(self, x):
        return tokenize(x, self.side, self.patch)

    def detokenize(self, tokens):
        return detokenize(tokens, self.side, self.patch)

    def _embed(self, tokens, t, cond):
        p = self.params
        feat = np.concatenate([time_features(t, self.n_freq),
                               condition_embedding(cond, self.cond_dim)], axis=1)
        c = np.tanh(feat @ p["Wc"] + p["bc"])
        h0 = tokens @ p["We"] + p["be"] + p["pos"] + c[:, None, :]
        return h0, c, feat

    def _forward(self, tokens, t, cond, kv_tokens=None):
        p = self.params
        h0, c, feat = self._embed(tokens, t, cond)
        kv = h0 if kv_tokens is None else self._embed(kv_tokens, t, cond)[0]
        q = h0 @ p["Wq"]
        k = kv @ p["Wk"]
        v = kv @ p["Wv"]
        att = softmax_rows(q @ np.swapaxes(k, -1, -2) / np.sqrt(self.width))
        h1 = h0 + att @ v
        z = np.tanh(h1 @ p["W1"] + p["b1"])
        y = z @ p["W2"] + p["b2"]
        cache = dict(tokens=tokens, feat=feat, c=c, h0=h0, q=q, k=k, v=v, att=att, h1=h1, z=z)
        return y, cache

    def _velocity(self, x, t, cond):
        y, _ = self._forward(self.tokenize(x), t, cond)
        return self.detokenize(y)

    def attention_weights(self, x, t, cond=0, kv_x=None):
        x2, t1, c1, squeeze = self._prepare(x, t, cond)
        kv = None if kv_x is None else self.tokenize(self._prepare(kv_x, t, cond)[0])
        att = self._forward(self.tokenize(x2), t1, c1, kv)[1]["att"]
        return att[0] if squeeze else att

    def velocity_tokens(self, tokens, t, cond, kv_tokens=None):
        """Velocity from token inputs; ``kv_tokens`` replaces the key/value stream."""
        tokens = np.asarray(tokens, dtype=float)
        if tokens.shape[-2:] != (self.n_tokens, self.patch * self.patch):
            raise FieldError(f"token shape {tokens.shape[-2:]} does not match the tokenizer")
        if kv_tokens is not None and np.shape(kv_tokens) != tokens.shape:
            raise FieldError("stylized and style token sets come from different tokenizers")
        x = self.detokenize(tokens)
        kv_x = None if kv_tokens is None else self.detokenize(kv_tokens)
        return self.velocity_injected(x, kv_x, t, cond) if kv_x is not None \
            else self.velocity(x, t, cond)

    def velocity_injected(self, x, kv_x, t, cond=0):
        """Velocity of ``x`` with keys and values computed from ``kv_x``."""
        x2, t1, c1, squeeze = self._prepare(x, t, cond)
        kv2 = self._prepare(kv_x, t, cond)[0]
        if kv2.shape != x2.shape:
            raise FieldError("injected key/value batch must match the query batch")
        y, _ = self._forward(self.tokenize(x2), t1, c1, self.tokenize(kv2))
        v = self.detokenize(y)
        return v[0] if squeeze else v

    def loss_and_grad(self, x, t, cond, target):
        x2, t1, c1, _ = self._prepare(x, t, cond)
        target = np.asarray(target, dtype=float).reshape(x2.shape)
        p = self.params
        y, ca = self._forward(self.tokenize(x2), t1, c1)
        resid = y - self.tokenize(target)
        n = x2.shape[0]
        loss = float(np.sum(resid * resid) / n)
        g = {}
        dy = 2.0 * resid / n
        g["W2"] = np.einsum("btm,btp->mp", ca["z"], dy)
        g["b2"] = dy.sum(axis=(0, 1))
        da1 = (dy @ p["W2"].T) * (1.0 - ca["z"] ** 2)
        g["W1"] = np.einsum("btd,btm->dm", ca["h1"], da1)
        g["b1"] = da1.sum(axis=(0, 1))
        dh1 = da1 @ p["W1"].T
        att, v, q, k, h0 = ca["att"], ca["v"], ca["q"], ca["k"], ca["h0"]
        datt = dh1 @ np.swapaxes(v, -1, -2)
        dv = np.swapaxes(att, -1, -2) @ dh1
        ds = att * (datt - np.sum(datt * att, axis=-1, keepdims=True)) / np.sqrt(self.width)
        dq = ds @ k
        dk = np.swapaxes(ds, -1, -2) @ q
        g["Wq"] = np.einsum("btd,bte->de", h0, dq)
        g["Wk"] = np.einsum("btd,bte->de", h0, dk)
        g["Wv"] = np.einsum("btd,bte->de", h0, dv)
        dh0 = dh1 + dq @ p["Wq"].T + dk @ p["Wk"].T + dv @ p["Wv"].T
        g["We"] = np.einsum("btp,btd->pd", ca["tokens"], dh0)
        g["be"] = dh0.sum(axis=(0, 1))
        g["pos"] = dh0.sum(axis=0)
        dpre = dh0.sum(axis=1) * (1.0 - ca["c"] ** 2)
        g["Wc"] = ca["feat"].T @ dpre
        g["bc"] = dpre.sum(axis=0)
        return loss, {name: g[name] for name in p}
