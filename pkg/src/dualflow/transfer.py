"""Inversion-free style transfer with dual rectified flows.

Dual-side runs walk a descending noise-level grid ``u_0 = 1 -> u_n = 0``
where a noisy image is ``(1 - u) x1 + u x0``. Two stylized states start at
the content and style images and receive the same velocity every step, so
their difference stays fixed at ``x1_style - x1_content``.
"""
import hashlib
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .flow_model.guidance import cfg_velocity
from .noise import NoiseStream
from .ode import (ASCENDING, DESCENDING, NOISE_LEVEL, TimeGrid, Trajectory, euler,
                  integrate_forward, invert, uniform_grid)

BRANCH_MODES = ("dual", "content_only", "style_only")
METHODS = ("vanilla", "pseudo", "v1", "v2")


@dataclass(frozen=True)
class TransferConfig:
    tau: float = 1.0
    lam: float = 0.5
    n_max: int = 50
    branch_mode: str = "dual"
    inject_attention: bool = False
    inject_steps: tuple = None
    cond_content: int = 0
    cond_style: int = 0
    cond_target: int = 0
    guidance: bool = False
    scale_target: float = 13.5
    scale_content: float = 3.5
    scale_style: float = 3.5
    seed: int = 0
    run: int = 0
    pseudo_alpha: float = 0.5
    pseudo_mix: str = "linear"
    fixed_noise: bool = False
    skip: int = 0

    def __post_init__(self):
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise ValueError("n_max must be a positive integer")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lam must lie in [0, 1]")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.branch_mode not in BRANCH_MODES:
            raise ValueError(f"branch_mode must be one of {BRANCH_MODES}")
        if not 0.0 <= self.pseudo_alpha <= 1.0:
            raise ValueError("pseudo_alpha must lie in [0, 1]")
        if self.pseudo_mix not in ("linear", "spherical"):
            raise ValueError("pseudo_mix must be 'linear' or 'spherical'")
        if not 0 <= self.skip < self.n_max:
            raise ValueError("skip must be in [0, n_max)")
        if self.inject_steps is not None:
            object.__setattr__(self, "inject_steps", tuple(int(s) for s in self.inject_steps))

    def to_dict(self):
        d = asdict(self)
        d["inject_steps"] = None if self.inject_steps is None else list(self.inject_steps)
        return d

    def with_(self, **kw):
        return replace(self, **kw)


@dataclass
class TransferState:
    step: int
    x_stylized: np.ndarray
    x_stylized_prime: np.ndarray
    content: np.ndarray
    style: np.ndarray
    noise: np.ndarray = None
    xc: np.ndarray = None
    xs: np.ndarray = None
    xc_shift: np.ndarray = None
    xs_shift: np.ndarray = None
    midpoint: np.ndarray = None
    velocity: np.ndarray = None

    @classmethod
    def start(cls, x1c, x1s):
        x1c = np.asarray(x1c, dtype=float)
        x1s = np.asarray(x1s, dtype=float)
        if x1c.shape != x1s.shape:
            raise ValueError(f"content shape {x1c.shape} != style shape {x1s.shape}")
        return cls(0, x1c.copy(), x1s.copy(), x1c, x1s)


@dataclass
class TransferResult:
    output: np.ndarray
    trajectories: tuple
    velocity_norms: list
    method: str
    config: TransferConfig
    states: list = field(default_factory=list, repr=False)


def noisy_pair(x1c, x1s, x0, u):
    """Content and style images noised to level ``u`` with one shared noise."""
    x1c, x1s, x0 = (np.asarray(a, dtype=float) for a in (x1c, x1s, x0))
    if not x1c.shape == x1s.shape == x0.shape:
        raise ValueError("content, style and noise must share one shape")
    if not 0.0 <= u <= 1.0:
        raise ValueError("noise level outside [0, 1]")
    return (1.0 - u) * x1c + u * x0, (1.0 - u) * x1s + u * x0


def step_noise(cfg, step, shape):
    return NoiseStream(cfg.seed, cfg.run).normal(0 if cfg.fixed_noise else step, shape,
                                                 label="transfer.x0")


class _Roles:
    """Per-role velocity evaluation with optional guidance and K/V injection."""

    def __init__(self, field, cfg):
        self.field = field
        self.cfg = cfg
        if cfg.inject_attention and not hasattr(field, "velocity_injected"):
            raise ValueError("attention injection requires an attention field")
        self.cond = {"content": cfg.cond_content, "style": cfg.cond_style,
                     "target": cfg.cond_target}
        self.scale = {"content": cfg.scale_content, "style": cfg.scale_style,
                      "target": cfg.scale_target}

    def injecting(self, step):
        if not self.cfg.inject_attention:
            return False
        rng = self.cfg.inject_steps
        return rng is None or rng[0] <= step < rng[1]

    def __call__(self, role, x, t, kv=None):
        cond = self.cond[role]
        if kv is not None:
            f = _Injected(self.field, kv)
        else:
            f = self.field
        if self.cfg.guidance:
            return cfg_velocity(f, x, t, cond, self.scale[role])
        return f.velocity(x, t, cond)


class _Injected:
    def __init__(self, field, kv):
        self.field, self.kv = field, kv

    def velocity(self, x, t, cond):
        return self.field.velocity_injected(x, self.kv, t, cond)


def transfer_grid(cfg):
    grid = uniform_grid(cfg.n_max, DESCENDING, NOISE_LEVEL)
    if cfg.skip:
        grid = TimeGrid(grid.times[cfg.skip:], DESCENDING, NOISE_LEVEL, grid.complement[cfg.skip:])
    return grid


# -- baselines --------------------------------------------------------------

def vanilla_transfer(field, x1c, x1s, config=None, lam=None):
    """Blend content and style velocities along their known noisy paths.

    The stylized state starts at the shared noise and follows
    ``lam v(x_t^c) + (1 - lam) v(x_t^s)`` on an ascending data-fraction grid.
    Under a perfectly rectified field this returns the blended image.
    """
    cfg = config or TransferConfig()
    if lam is not None:
        cfg = cfg.with_(lam=lam)
    st = TransferState.start(x1c, x1s)
    roles = _Roles(field, cfg)
    x0 = step_noise(cfg, 0, st.content.shape)
    field.set_noise(x0)
    grid = uniform_grid(cfg.n_max, ASCENDING)
    norms = []

    def velocity(x, t):
        k = len(norms)
        xc = t * st.content + (1.0 - t) * x0
        xs = t * st.style + (1.0 - t) * x0
        vc = roles("content", xc, t, kv=xs if roles.injecting(k) else None)
        v = cfg.lam * vc + (1.0 - cfg.lam) * roles("style", xs, t)
        norms.append(float(np.linalg.norm(v)))
        return v

    traj = euler(velocity, x0, grid, {"method": "vanilla"})
    return TransferResult(traj.final, (traj,), norms, "vanilla", cfg)


def _slerp(a, b, alpha):
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    cos = np.clip(np.dot(a.ravel(), b.ravel()) / max(na * nb, 1e-300), -1.0, 1.0)
    omega = np.arccos(cos)
    if omega < 1e-8:
        return alpha * a + (1.0 - alpha) * b
    return (np.sin(alpha * omega) * a + np.sin((1.0 - alpha) * omega) * b) / np.sin(omega)


def mix_latents(z_content, z_style, alpha, mode="linear"):
    if mode == "spherical":
        return _slerp(z_content, z_style, alpha)
    return alpha * z_content + (1.0 - alpha) * z_style


def pseudo_inversion_transfer(field, x1c, x1s, config=None):
    """Invert both images, mix their latents, and regenerate under the target condition."""
    cfg = config or TransferConfig()
    st = TransferState.start(x1c, x1s)
    roles = _Roles(field, cfg)
    down = uniform_grid(cfg.n_max, DESCENDING)
    inv_c = invert(field, st.content, down, cfg.cond_content)
    inv_s = invert(field, st.style, down, cfg.cond_style)
    z = mix_latents(inv_c.final, inv_s.final, cfg.pseudo_alpha, cfg.pseudo_mix)
    up = uniform_grid(cfg.n_max, ASCENDING)
    if not cfg.guidance and not cfg.inject_attention:
        traj = integrate_forward(field, z, up, cfg.cond_target)
    else:
        style_path = inv_s.states[::-1]
        t_up = up.data_fraction()

        def velocity(x, t):
            k = int(np.searchsorted(t_up, t))
            return roles("target", x, t, kv=style_path[k] if roles.injecting(k) else None)

        traj = euler(velocity, z, up, {"method": "pseudo"})
    norms = [float(np.linalg.norm(d)) for d in np.diff(traj.states, axis=0) * cfg.n_max]
    return TransferResult(traj.final, (inv_c, inv_s, traj), norms, "pseudo", cfg)


# -- dual-side transfer -------------------------------------------------------

def _prepare_step(state, u_i, u_next, cfg):
    if not u_next < u_i:
        raise ValueError("dual-side steps need a descending noise-level grid")
    x0 = step_noise(cfg, state.step, state.content.shape)
    xc, xs = noisy_pair(state.content, state.style, x0, u_i)
    xc_shift = xc + cfg.tau * (state.x_stylized - state.content)
    xs_shift = xs + cfg.tau * (state.x_stylized_prime - state.style)
    return x0, xc, xs, xc_shift, xs_shift


def _advance(state, v, du, **extra):
    if not np.all(np.isfinite(v)):
        raise FloatingPointError(f"non-finite velocity at transfer step {state.step}")
    return replace(state, step=state.step + 1, x_stylized=state.x_stylized + du * v,
                   x_stylized_prime=state.x_stylized_prime + du * v, velocity=v, **extra)


def v1_step(field, state, u_i, u_next, config, roles=None):
    """One Version-I step: content branch, style branch, or their average."""
    cfg = config
    roles = roles or _Roles(field, cfg)
    x0, xc, xs, xc_shift, xs_shift = _prepare_step(state, u_i, u_next, cfg)
    field.set_noise(x0)
    t = 1.0 - u_i
    kv = xs if roles.injecting(state.step) else None
    if cfg.branch_mode in ("dual", "content_only"):
        v_content = roles("content", xc_shift, t, kv) - roles("style", xs, t)
    if cfg.branch_mode in ("dual", "style_only"):
        v_style = roles("style", xs_shift, t, kv) - roles("content", xc, t)
    if cfg.branch_mode == "dual":
        v = 0.5 * (v_content + v_style)
    else:
        v = v_content if cfg.branch_mode == "content_only" else v_style
    return _advance(state, v, u_next - u_i, noise=x0, xc=xc, xs=xs,
                    xc_shift=xc_shift, xs_shift=xs_shift)


def v2_step(field, state, u_i, u_next, config, roles=None):
    """One Version-II step around the blended midpoint of the shifted points."""
    cfg = config
    roles = roles or _Roles(field, cfg)
    x0, xc, xs, xc_shift, xs_shift = _prepare_step(state, u_i, u_next, cfg)
    field.set_noise(x0)
    t = 1.0 - u_i
    # written as a difference so equal shifted points give the midpoint bit-exactly
    mid = xc_shift + cfg.lam * (xs_shift - xc_shift)
    v_mid = roles("target", mid, t, xs if roles.injecting(state.step) else None)
    v = (roles("content", xc_shift, t) - v_mid) + (roles("style", xs_shift, t) - v_mid)
    return _advance(state, v, u_next - u_i, noise=x0, xc=xc, xs=xs,
                    xc_shift=xc_shift, xs_shift=xs_shift, midpoint=mid)


def _dual_run(step_fn, method, field, x1c, x1s, cfg, keep_states):
    roles = _Roles(field, cfg)
    grid = transfer_grid(cfg)
    u = grid.times
    state = TransferState.start(x1c, x1s)
    a, b, norms, kept = [state.x_stylized], [state.x_stylized_prime], [], []
    for i in range(grid.n_steps):
        state = step_fn(field, state, u[i], u[i + 1], cfg, roles)
        a.append(state.x_stylized)
        b.append(state.x_stylized_prime)
        norms.append(float(np.linalg.norm(state.velocity)))
        if keep_states:
            kept.append(state)
    meta = {"method": method, "branch_mode": cfg.branch_mode, "grid": grid.describe()}
    traj_a = Trajectory(grid.times, np.array(a), NOISE_LEVEL, dict(meta, state="stylized"))
    traj_b = Trajectory(grid.times, np.array(b), NOISE_LEVEL, dict(meta, state="stylized_prime"))
    if method == "v1" and cfg.branch_mode == "content_only":
        out = state.x_stylized
    elif method == "v1" and cfg.branch_mode == "style_only":
        out = state.x_stylized_prime
    else:
        out = 0.5 * (state.x_stylized + state.x_stylized_prime)
    return TransferResult(out, (traj_a, traj_b), norms, method, cfg, kept)


def v1_run(field, x1c, x1s, config=None, keep_states=False):
    """Version I. Single-branch modes return that branch's own endpoint."""
    return _dual_run(v1_step, "v1", field, x1c, x1s, config or TransferConfig(), keep_states)


def v2_run(field, x1c, x1s, config=None, keep_states=False):
    """Version II; ``branch_mode`` is ignored."""
    cfg = (config or TransferConfig()).with_(branch_mode="dual")
    return _dual_run(v2_step, "v2", field, x1c, x1s, cfg, keep_states)


def run_method(method, field, x1c, x1s, config):
    if method == "vanilla":
        return vanilla_transfer(field, x1c, x1s, config)
    if method == "pseudo":
        return pseudo_inversion_transfer(field, x1c, x1s, config)
    if method == "v1":
        return v1_run(field, x1c, x1s, config)
    if method == "v2":
        return v2_run(field, x1c, x1s, config)
    raise ValueError(f"unknown method {method!r}; choose from {METHODS}")


def inject_kv(field, stylized_tokens, style_tokens, t, cond=0, enabled=True):
    """Attention velocity for the stylized stream, keys/values from the style stream."""
    if not hasattr(field, "velocity_tokens"):
        raise ValueError("attention injection requires an attention field")
    return field.velocity_tokens(stylized_tokens, t, cond,
                                 kv_tokens=style_tokens if enabled else None)


def array_hash(x):
    return hashlib.sha256(np.ascontiguousarray(x, dtype="<f8").tobytes()).hexdigest()


def manifest(result, inputs):
    """Self-describing record: config echo, input/output hashes, velocity norms."""
    return {
        "method": result.method,
        "config": result.config.to_dict(),
        "inputs": {k: array_hash(v) for k, v in inputs.items()},
        "output": array_hash(result.output),
        "velocity_norms": result.velocity_norms,
    }
