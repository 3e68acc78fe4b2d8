"""Oracle-backed invariant checks, runnable from the CLI.

Each check returns ``(passed, detail)``. Checks that take keyword arguments
can be re-run with perturbed settings to confirm they are able to fail.
"""
import time

import numpy as np

from . import datasets as ds
from .flow_model import (AttentionField, CountingField, DeltaTarget, DenseField, PerfectCoupling,
                         cfg_velocity, detokenize, grad_check, rf_loss, tokenize)
from .flow_model.base import VelocityField
from .metrics import FeatureExtractor, content_loss, energy_distance, style_loss
from .noise import NoiseStream
from .ode import (DESCENDING, NOISE_LEVEL, integrate_forward, invert, reference_integrate,
                  uniform_grid)
from .transfer import TransferConfig, TransferState, v1_run, v2_run, v2_step, vanilla_transfer

C_ID, S_ID, T_ID = 1, 2, 3


def _pair(dim, seed):
    s = NoiseStream(seed, run=7)
    return s.normal(0, dim, label="verify.c"), s.normal(1, dim, label="verify.s")


def _rel(a, b):
    return float(np.max(np.abs(a - b)) / max(1.0, float(np.max(np.abs(b)))))


def coupling_oracle(xc, xs, target=None):
    target = 0.5 * (xc + xs) if target is None else target
    return PerfectCoupling({C_ID: xc, S_ID: xs, T_ID: target})


class DriftedCoupling(VelocityField):
    """Perfect coupling plus a condition-independent linear drift ``kappa * x``.

    The branch boundary identities hold for this field only when the shifted
    point coincides with the opposite noisy image, i.e. at ``tau = 1``.
    """

    kind = "drifted_coupling"

    def __init__(self, oracle, kappa=0.5):
        self.oracle, self.kappa = oracle, kappa
        self.state_dim = oracle.state_dim

    def set_noise(self, x0):
        self.oracle.set_noise(x0)

    def _velocity(self, x, t, cond):
        return self.oracle._velocity(x, t, cond) + self.kappa * x


def _cfg(**kw):
    return TransferConfig(cond_content=C_ID, cond_style=S_ID, cond_target=T_ID, **kw)


def check_vanilla_degeneracy(n_pairs=20, tol=1e-9):
    worst = 0.0
    for dim in (2, 256):
        for n in (1, 10, 50):
            for k in range(n_pairs):
                xc, xs = _pair(dim, 1000 * dim + 10 * n + k)
                out = vanilla_transfer(coupling_oracle(xc, xs), xc, xs, _cfg(n_max=n, seed=k)).output
                worst = max(worst, _rel(out, 0.5 * (xc + xs)))
    return worst < tol, f"max rel err {worst:.2e}"


def check_v1_boundary(tau=1.0, tol=1e-9, drift=True):
    """Content branch ends at the style image, style branch at the content image."""
    worst = 0.0
    for n in (1, 10, 50):
        for dim in (2, 256):
            xc, xs = _pair(dim, 77 + n + dim)
            fields = [coupling_oracle(xc, xs)]
            if drift:
                fields.append(DriftedCoupling(coupling_oracle(xc, xs)))
            for f in fields:
                rc = v1_run(f, xc, xs, _cfg(n_max=n, tau=tau, branch_mode="content_only"))
                rs = v1_run(f, xc, xs, _cfg(n_max=n, tau=tau, branch_mode="style_only"))
                worst = max(worst, _rel(rc.trajectories[0].final, xs),
                            _rel(rs.trajectories[1].final, xc))
    return worst < tol, f"max rel err {worst:.2e} (tau={tau})"


def check_dual_mean(tol=1e-9):
    xc, xs = _pair(16, 5)
    o1 = v1_run(coupling_oracle(xc, xs), xc, xs, _cfg(n_max=20)).output
    o2 = v2_run(coupling_oracle(xc, xs), xc, xs, _cfg(n_max=20)).output
    err = max(_rel(o1, 0.5 * (xc + xs)), _rel(o2, 0.5 * (xc + xs)))
    return err < tol, f"max rel err {err:.2e}"


def check_identity_style(tol=1e-9):
    xc, _ = _pair(8, 9)
    worst = 0.0
    for method in (vanilla_transfer, v1_run, v2_run):
        worst = max(worst, _rel(method(coupling_oracle(xc, xc), xc, xc.copy(), _cfg(n_max=7)).output, xc))
    return worst < tol, f"max rel err {worst:.2e}"


def _offset_fields(dim):
    xc, xs = _pair(dim, 31)
    fields = [coupling_oracle(xc, xs), DenseField(dim, hidden=(16,), seed=4)]
    if dim == 256:
        fields.append(AttentionField(seed=5))
    return xc, xs, fields


def check_parallel_offset(tol=1e-12):
    worst = 0.0
    for dim in (2, 256):
        xc, xs, fields = _offset_fields(dim)
        scale = max(1.0, float(np.max(np.abs(xs - xc))))
        for f in fields:
            for run in (v1_run, v2_run):
                r = run(f, xc, xs, _cfg(n_max=25, seed=3))
                drift = r.trajectories[1].states - r.trajectories[0].states - (xs - xc)
                worst = max(worst, float(np.max(np.linalg.norm(drift, axis=1))) / scale)
    return worst < tol, f"max offset drift {worst:.2e}"


def check_eval_budget(n_max=13):
    xc, xs = _pair(4, 2)
    got = {}
    for name, run, per in (("v1", v1_run, 4), ("v2", v2_run, 3)):
        f = CountingField(coupling_oracle(xc, xs))
        run(f, xc, xs, _cfg(n_max=n_max))
        got[name] = (f.calls, per * n_max)
    ok = all(a == b for a, b in got.values())
    return ok, ", ".join(f"{k}: {a}/{b}" for k, (a, b) in got.items())


def check_v2_first_midpoint():
    xc, xs = _pair(32, 12)
    cfg = _cfg(n_max=10, seed=8)
    state = v2_step(coupling_oracle(xc, xs), TransferState.start(xc, xs), 1.0, 0.9, cfg)
    same = bool(np.array_equal(state.midpoint, state.noise))
    return same, "midpoint == shared noise" if same else "midpoint differs from noise"


def check_grad_dense(tol=1e-4, seeds=(0, 1, 2, 3, 4)):
    worst = 0.0
    for seed in seeds:
        s = NoiseStream(seed, run=9)
        f = DenseField(2, seed=seed)
        x = s.normal(0, (3, 2))
        worst = max(worst, grad_check(f, x, s.uniform(1, 3), [0, 1, 2], s.normal(2, (3, 2)),
                                      seed=seed))
    return worst < tol, f"max rel err {worst:.2e}"


def check_grad_attention(tol=1e-3, seeds=(0, 1, 2, 3, 4)):
    worst = 0.0
    for seed in seeds:
        s = NoiseStream(seed, run=10)
        f = AttentionField(seed=seed)
        x = s.uniform(0, (2, 256))
        worst = max(worst, grad_check(f, x, s.uniform(1, 2), [0, 5], s.normal(2, (2, 256)),
                                      seed=seed))
    return worst < tol, f"max rel err {worst:.2e}"


def check_attention_rows(tol=1e-12):
    f = AttentionField(seed=1)
    x = NoiseStream(3).normal(0, (4, 256))
    att = f.attention_weights(x, 0.4, 2)
    err = float(np.max(np.abs(att.sum(axis=-1) - 1.0)))
    return bool(err < tol and np.all(att >= 0)), f"max row-sum err {err:.1e}"


def check_tokenizer_roundtrip():
    x = NoiseStream(4).normal(0, (5, 256))
    ok = bool(np.array_equal(detokenize(tokenize(x)), x))
    return ok, "bit-exact" if ok else "mismatch"


def check_injection_noop():
    f = AttentionField(seed=2)
    x = NoiseStream(6).normal(0, 256)
    ok = bool(np.array_equal(f.velocity_injected(x, x.copy(), 0.3, 1), f.velocity(x, 0.3, 1)))
    return ok, "bit-exact" if ok else "injected output differs"


def check_coupling_roundtrip(tol=1e-12):
    xc, xs = _pair(6, 21)
    o = PerfectCoupling({1: xc})
    o.set_noise(xs)
    fwd = integrate_forward(o, xs, uniform_grid(17), 1)
    back = invert(o, fwd.final, uniform_grid(17, DESCENDING), 1)
    err = max(_rel(fwd.final, xc), _rel(back.final, xs))
    return err < tol, f"max rel err {err:.2e}"


def check_step_identity():
    f = DenseField(2, hidden=(8,), seed=3)
    x0 = np.array([0.3, -0.7])
    out = integrate_forward(f, x0, uniform_grid(1), 1).final
    ok = bool(np.array_equal(out, x0 + 1.0 * f.velocity(x0, 0.0, 1)))
    return ok, "one Euler step matches x0 + v(x0, 0)"


def check_grid_involution():
    ok = all(uniform_grid(n, d, c).convert().convert() == uniform_grid(n, d, c)
             for n in (1, 3, 50) for d in ("ascending", "descending")
             for c in ("data_fraction", NOISE_LEVEL))
    return ok, "convert twice is identity"


def check_noise_marginals(n=100_000):
    z = NoiseStream(2024).normal(0, n)
    mean, var = float(z.mean()), float(z.var())
    return abs(mean) < 0.01 and abs(var - 1.0) < 0.02, f"mean {mean:+.4f} var {var:.4f}"


def check_delta_endpoint():
    a = np.array([2.0, 2.0])
    f = DeltaTarget({1: a})
    coarse = integrate_forward(f, np.zeros(2), uniform_grid(1000), 1).final
    fine = reference_integrate(f, np.zeros(2), 1)
    err_c, err_f = float(np.max(np.abs(coarse - a))), float(np.max(np.abs(fine - a)))
    return err_c < 1e-2 and err_f < 2 * f.eps, f"n=1000 err {err_c:.1e}, n=4096 err {err_f:.1e}"


def check_guidance_identities():
    m, a, x0 = np.array([1.0, -1.0]), np.array([3.0, 0.5]), np.array([0.2, 0.1])
    o = PerfectCoupling({0: m, 1: a})
    o.set_noise(x0)
    x = np.array([5.0, 5.0])
    ok = (np.array_equal(cfg_velocity(o, x, 0.3, 1, 1.0), o.velocity(x, 0.3, 1))
          and np.array_equal(cfg_velocity(o, x, 0.3, 1, 0.0), o.velocity(x, 0.3, 0))
          and np.allclose(cfg_velocity(o, x, 0.3, 1, 2.0), 2 * a - m - x0, rtol=0, atol=1e-12))
    return bool(ok), "scale 1 / 0 / 2 identities"


def check_rf_loss_zero():
    x0, x1 = np.array([[0.0, 0.0]]), np.array([[3.0, 4.0]])
    o = PerfectCoupling({1: x1[0]})
    o.set_noise(x0[0])
    zero = rf_loss(o, (x0, x1, np.array([1])), [0.1, 0.5, 0.9])
    o0 = PerfectCoupling({1: x0[0]})
    o0.set_noise(x0[0])
    full = rf_loss(o0, (x0, x1, np.array([1])), [0.3])
    return zero == 0.0 and full == 25.0, f"exact field {zero}, zero field {full}"


def check_metric_zeros():
    ex = FeatureExtractor()
    img = ds.render_glyph(2, 3).flat
    other = ds.render_glyph(1, 4).flat
    pts = NoiseStream(1).normal(0, (50, 2))
    ok = (content_loss(ex, img, img) == 0.0 and style_loss(ex, img, img) == 0.0
          and abs(energy_distance(pts, pts)) < 1e-12 and style_loss(ex, img, other) > 0)
    return bool(ok), "zero on identical inputs, positive otherwise"


def check_seed_determinism():
    f = AttentionField(seed=7)
    xc, xs = ds.render_glyph(0, 1).flat, ds.render_glyph(1, 4).flat
    cfg = TransferConfig(n_max=5, seed=42, inject_attention=True)
    a = v2_run(f, xc, xs, cfg).output
    b = v2_run(f, xc, xs, cfg).output
    return bool(np.array_equal(a, b)), "bit-identical reruns"


CHECKS = {
    "vanilla_mean_degeneracy": check_vanilla_degeneracy,
    "v1_branch_boundaries": check_v1_boundary,
    "dual_side_mean_under_oracle": check_dual_mean,
    "identity_style": check_identity_style,
    "parallel_offset": check_parallel_offset,
    "evaluation_budget": check_eval_budget,
    "v2_first_midpoint": check_v2_first_midpoint,
    "grad_check_dense": check_grad_dense,
    "grad_check_attention": check_grad_attention,
    "attention_rows_sum_to_one": check_attention_rows,
    "tokenizer_roundtrip": check_tokenizer_roundtrip,
    "injection_noop": check_injection_noop,
    "coupling_forward_inverse": check_coupling_roundtrip,
    "euler_step_identity": check_step_identity,
    "grid_involution": check_grid_involution,
    "noise_marginals": check_noise_marginals,
    "delta_oracle_endpoint": check_delta_endpoint,
    "guidance_identities": check_guidance_identities,
    "rf_loss_exact_values": check_rf_loss_zero,
    "metric_zeros": check_metric_zeros,
    "seed_determinism": check_seed_determinism,
}


def run_checks(names=None, out=print):
    """Run checks in order; returns list of ``(name, passed, detail, seconds)``."""
    results = []
    for name in names or CHECKS:
        t0 = time.perf_counter()
        try:
            ok, detail = CHECKS[name]()
        except Exception as exc:  # a crashing check is a failing check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        dt = time.perf_counter() - t0
        results.append((name, bool(ok), detail, dt))
        if out:
            out(f"{'PASS' if ok else 'FAIL'}  {name:<30s} {dt:7.3f}s  {detail}")
    return results
