"""Command-line front end.

Every subcommand resolves its configuration as defaults < ``--config`` JSON
< ``--set key=value`` < named flags, rejects unknown keys, and writes a
``manifest.json`` echoing the resolved configuration next to its outputs.
A manifest can be passed back through ``--config`` to reproduce a run.
"""
import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import datasets as ds
from . import metrics, transfer, verify
from .flow_model import (AttentionField, DeltaTarget, DenseField, PerfectCoupling, TrainConfig,
                         TrainingDiverged, load_checkpoint, save_checkpoint, train)
from .noise import NoiseStream
from .ode import (ASCENDING, DESCENDING, IntegrationError, integrate_forward, invert, reconstruct,
                  uniform_grid, write_trajectory_csv)

OUTPUT_ROOT_ENV = "DUALFLOW_OUTPUT_ROOT"
ORACLE_IDS = {"content": 1, "style": 2, "target": 3}


class UsageError(Exception):
    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


FIELD_KEYS = {"checkpoint": None, "oracle": None}

DEFAULTS = {
    "train": {"dataset": "two_moons", "field": None, "n_data": None, "steps": None,
              "batch_size": None, "lr": 1e-3, "optimizer": "adam", "seed": 7,
              "cond_dropout": None, "hidden": [128, 128, 128], "window": 100},
    "generate": {**FIELD_KEYS, "n": 16, "steps": 50, "cond": 1, "seed": 0},
    "invert": {**FIELD_KEYS, "input": "glyph:0,1", "steps": 50, "cond": None, "seed": 0},
    "reconstruct": {**FIELD_KEYS, "input": "glyph:0,1", "steps": 50, "cond": None, "seed": 0},
    "transfer": {**FIELD_KEYS, "content": "glyph:0,1", "style": "glyph:1,4", "method": "v2",
                 "branch": "dual", "tau": 1.0, "lambda": 0.5, "steps": 50, "inject": False,
                 "inject_steps": None, "seed": 0, "guidance": False, "scale_target": 13.5,
                 "scale_content": 3.5, "scale_style": 3.5, "pseudo_alpha": 0.5,
                 "pseudo_mix": "linear", "fixed_noise": False, "skip": 0,
                 "cond_content": None, "cond_style": None, "cond_target": None},
    "render-glyphs": {},
    "verify": {"only": None},
}
DEFAULTS["ablate"] = {k: v for k, v in DEFAULTS["transfer"].items()
                      if k not in ("method", "branch", "inject")}

TRAIN_PRESETS = {
    "two_moons": {"field": "dense", "n_data": 20000, "steps": 4000, "batch_size": 256,
                  "cond_dropout": 0.1},
    "gaussian": {"field": "dense", "n_data": 20000, "steps": 3000, "batch_size": 256,
                 "cond_dropout": 0.1},
    "ring": {"field": "dense", "n_data": 20000, "steps": 4000, "batch_size": 256,
             "cond_dropout": 0.1},
    "glyphs": {"field": "attention", "n_data": 4096, "steps": 2000, "batch_size": 64,
               "cond_dropout": 0.0},
}

# flag dest -> config key
FLAG_KEYS = {"seed": "seed", "method": "method", "branch": "branch", "tau": "tau",
             "lambda_": "lambda", "steps": "steps", "inject": "inject",
             "checkpoint": "checkpoint", "oracle": "oracle", "content": "content",
             "style": "style", "dataset": "dataset", "field": "field", "lr": "lr",
             "batch_size": "batch_size", "n": "n", "cond": "cond", "input": "input",
             "only": "only"}


# -- configuration ----------------------------------------------------------

def resolve_config(command, args):
    cfg = dict(DEFAULTS[command])
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        if isinstance(doc, dict) and "subcommand" in doc and "config" in doc:
            doc = doc["config"]
        _merge(cfg, doc, command)
    overrides = {}
    for item in args.set or []:
        key, sep, raw = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}", key=item)
        try:
            overrides[key] = json.loads(raw)
        except json.JSONDecodeError:
            overrides[key] = raw
    _merge(cfg, overrides, command)
    for dest, key in FLAG_KEYS.items():
        value = getattr(args, dest, None)
        if value is not None and key in cfg:
            cfg[key] = value
    return cfg


def _merge(cfg, doc, command):
    if not isinstance(doc, dict):
        raise UsageError("config must be a JSON object")
    for key, value in doc.items():
        if key not in cfg:
            raise UsageError(f"unknown config key {key!r} for {command}", key=key)
        cfg[key] = value


def output_dir(args, command):
    if args.out:
        out = Path(args.out)
    else:
        out = Path(os.environ.get(OUTPUT_ROOT_ENV, "runs")) / command
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def write_manifest(out, command, cfg, outputs, extra=None):
    doc = {"subcommand": command, "config": cfg, "outputs": sorted(outputs)}
    if extra:
        doc.update(extra)
    write_json(out / "manifest.json", doc)


# -- inputs and fields -------------------------------------------------------

def parse_state(spec):
    """``glyph:c,s`` | ``point:x,y,..`` | path to a PGM file -> (state, glyph ids)."""
    if isinstance(spec, str) and spec.startswith("glyph:"):
        try:
            c, s = (int(v) for v in spec[6:].split(","))
            return ds.render_glyph(c, s).flat, (c, s)
        except (ValueError, KeyError) as exc:
            raise UsageError(f"bad glyph spec {spec!r}: {exc}") from None
    if isinstance(spec, str) and spec.startswith("point:"):
        try:
            return np.array([float(v) for v in spec[6:].split(",")]), None
        except ValueError:
            raise UsageError(f"bad point spec {spec!r}") from None
    path = Path(str(spec))
    if not path.exists():
        raise UsageError(f"input {spec!r} is neither a glyph/point spec nor a file")
    return ds.read_pgm(path).reshape(-1), None


def load_field(cfg, targets=None):
    if bool(cfg.get("checkpoint")) == bool(cfg.get("oracle")):
        raise UsageError("give exactly one of checkpoint or oracle", key="checkpoint")
    if cfg.get("checkpoint"):
        try:
            return load_checkpoint(cfg["checkpoint"])
        except (OSError, ValueError, KeyError) as exc:
            raise UsageError(f"cannot load checkpoint: {exc}", key="checkpoint") from None
    kind = cfg["oracle"]
    if targets is None:
        raise UsageError(f"oracle {kind!r} needs known targets for this subcommand", key="oracle")
    if kind == "perfect_coupling":
        return PerfectCoupling(targets)
    if kind == "delta_target":
        return DeltaTarget(targets)
    raise UsageError(f"unknown oracle {kind!r}", key="oracle")


def _oracle_noise(cfg, dim):
    return NoiseStream(cfg["seed"]).normal(0, dim, label="cli.oracle_noise")


# -- subcommands ----------------------------------------------------------------

def cmd_train(cfg, out):
    preset = TRAIN_PRESETS.get(cfg["dataset"])
    if preset is None:
        raise UsageError(f"unknown dataset {cfg['dataset']!r}", key="dataset")
    for key, value in preset.items():
        if cfg[key] is None:
            cfg[key] = value
    seed = int(cfg["seed"])
    if cfg["dataset"] == "glyphs":
        x1, cond = ds.glyph_samples(cfg["n_data"], seed=seed)
    else:
        dist = {"two_moons": ds.two_moons, "gaussian": ds.gaussian, "ring": ds.ring}[cfg["dataset"]]()
        x1, cond = ds.sample_2d(dist, cfg["n_data"], seed=seed), 1
    pairs = ds.make_pairs(x1, cond, seed=seed + 1)
    dim = x1.shape[1]
    if cfg["field"] == "dense":
        field = DenseField(dim, hidden=cfg["hidden"], seed=seed)
    elif cfg["field"] == "attention":
        if dim != 256:
            raise UsageError("the attention field needs 16x16 image data", key="field")
        field = AttentionField(seed=seed)
    else:
        raise UsageError(f"unknown field {cfg['field']!r}", key="field")
    tc = TrainConfig(steps=int(cfg["steps"]), batch_size=int(cfg["batch_size"]), lr=cfg["lr"],
                     optimizer=cfg["optimizer"], seed=seed, cond_dropout=cfg["cond_dropout"],
                     window=int(cfg["window"]))
    result = train(field, pairs, tc)
    save_checkpoint(result.field, out / "checkpoint.json", seed=seed)
    with (out / "loss.csv").open("w") as fh:
        fh.write("step,loss\n")
        for i, v in enumerate(result.history):
            fh.write(f"{i},{v:.17g}\n")
    summary = {"initial_window_loss": result.trailing_loss(start=True) if tc.steps else None,
               "final_window_loss": result.trailing_loss() if tc.steps else None}
    write_manifest(out, "train", cfg, ["checkpoint.json", "loss.csv"], {"summary": summary})
    return 0


def cmd_generate(cfg, out):
    field = load_field(cfg)
    z = NoiseStream(cfg["seed"]).normal(0, (int(cfg["n"]), field.state_dim), label="cli.generate")
    traj = integrate_forward(field, z, uniform_grid(int(cfg["steps"])), int(cfg["cond"]))
    samples = traj.final
    outputs = ["samples.csv", "trajectory.csv"]
    np.savetxt(out / "samples.csv", samples, delimiter=",", fmt="%.17g")
    write_trajectory_csv(out / "trajectory.csv", traj.__class__(
        traj.times, traj.states[:, 0], traj.convention, traj.meta))
    if field.state_dim == ds.SIDE * ds.SIDE:
        for i, s in enumerate(samples):
            ds.write_pgm(out / f"sample_{i:03d}.pgm", s)
            outputs.append(f"sample_{i:03d}.pgm")
    write_manifest(out, "generate", cfg, outputs)
    return 0


def _state_and_cond(cfg):
    x, glyph = parse_state(cfg["input"])
    cond = cfg["cond"]
    if cond is None:
        cond = ds.target_condition(*glyph) if glyph and glyph[1] > 0 else 0
    return x, int(cond)


def _single_field(cfg, x, cond):
    if cfg.get("oracle"):
        field = load_field(cfg, {cond: x})
        field.set_noise(_oracle_noise(cfg, x.size)) if field.kind == "perfect_coupling" else None
        return field
    return load_field(cfg)


def cmd_invert(cfg, out):
    x, cond = _state_and_cond(cfg)
    field = _single_field(cfg, x, cond)
    traj = invert(field, x, uniform_grid(int(cfg["steps"]), DESCENDING), cond)
    np.savetxt(out / "latent.csv", traj.final[None], delimiter=",", fmt="%.17g")
    write_trajectory_csv(out / "trajectory.csv", traj)
    write_manifest(out, "invert", cfg, ["latent.csv", "trajectory.csv"])
    return 0


def cmd_reconstruct(cfg, out):
    x, cond = _state_and_cond(cfg)
    field = _single_field(cfg, x, cond)
    rec = reconstruct(field, x, int(cfg["steps"]), cond)
    write_trajectory_csv(out / "inversion.csv", rec.inversion)
    write_trajectory_csv(out / "forward.csv", rec.forward)
    outputs = ["inversion.csv", "forward.csv", "report.json"]
    write_json(out / "report.json", {"error": float(rec.error), "n_steps": int(cfg["steps"]),
                                     "latent": rec.latent.tolist(),
                                     "reconstruction": rec.reconstruction.tolist()})
    if x.size == ds.SIDE * ds.SIDE:
        ds.write_pgm(out / "reconstruction.pgm", rec.reconstruction)
        outputs.append("reconstruction.pgm")
    write_manifest(out, "reconstruct", cfg, outputs)
    return 0


def _transfer_setup(cfg):
    xc, gc = parse_state(cfg["content"])
    xs, gs = parse_state(cfg["style"])
    if xc.shape != xs.shape:
        raise UsageError("content and style inputs differ in size", key="style")
    conds = {"content": cfg["cond_content"], "style": cfg["cond_style"],
             "target": cfg["cond_target"]}
    if cfg.get("oracle"):
        derived = dict(ORACLE_IDS)
    elif gc and gs and gs[1] > 0:
        derived = {"content": ds.content_condition(gc[0]), "style": ds.style_condition(gs[1]),
                   "target": ds.target_condition(gc[0], gs[1])}
    else:
        derived = {"content": 0, "style": 0, "target": 0}
    conds = {k: int(derived[k] if v is None else v) for k, v in conds.items()}
    if cfg.get("oracle"):
        if len(set(conds.values())) != 3:
            raise UsageError("oracle runs need three distinct condition ids", key="cond_target")
        field = load_field(cfg, {conds["content"]: xc, conds["style"]: xs,
                                 conds["target"]: 0.5 * (xc + xs)})
        if field.kind == "perfect_coupling":
            field.set_noise(_oracle_noise(cfg, xc.size))
    else:
        field = load_field(cfg)
    if field.state_dim != xc.size:
        raise UsageError(f"field state dim {field.state_dim} != input size {xc.size}")
    return field, xc, xs, conds


def _transfer_config(cfg, conds, method, branch, inject):
    try:
        return transfer.TransferConfig(
            tau=float(cfg["tau"]), lam=float(cfg["lambda"]), n_max=int(cfg["steps"]),
            branch_mode=branch, inject_attention=bool(inject), inject_steps=cfg["inject_steps"],
            cond_content=conds["content"], cond_style=conds["style"],
            cond_target=conds["target"], guidance=bool(cfg["guidance"]),
            scale_target=cfg["scale_target"], scale_content=cfg["scale_content"],
            scale_style=cfg["scale_style"], seed=int(cfg["seed"]),
            pseudo_alpha=float(cfg["pseudo_alpha"]), pseudo_mix=cfg["pseudo_mix"],
            fixed_noise=bool(cfg["fixed_noise"]), skip=int(cfg["skip"]))
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _run_one(field, xc, xs, tcfg, method, out):
    if tcfg.inject_attention and not hasattr(field, "velocity_injected"):
        raise UsageError(f"attention injection requires an attention field, got {field.kind}",
                         key="inject")
    result = transfer.run_method(method, field, xc, xs, tcfg)
    out.mkdir(parents=True, exist_ok=True)
    ds.write_pgm(out / "stylized.pgm", result.output) if xc.size == ds.SIDE ** 2 else \
        np.savetxt(out / "stylized.csv", result.output[None], delimiter=",", fmt="%.17g")
    outputs = ["stylized.pgm" if xc.size == ds.SIDE ** 2 else "stylized.csv"]
    trajs = result.trajectories if method in ("v1", "v2") else result.trajectories[-1:]
    for name, traj in zip(("trajectory_a.csv", "trajectory_b.csv"), trajs):
        write_trajectory_csv(out / name, traj)
        outputs.append(name)
    rep = metrics.report(result.output, xc, xs, method=method, branch=tcfg.branch_mode,
                         inject=tcfg.inject_attention) if xc.size == ds.SIDE ** 2 else \
        metrics.MetricsReport(float("nan"), float("nan"), float(np.linalg.norm(result.output - xc)),
                              float(np.linalg.norm(result.output - xs)), {"method": method})
    write_json(out / "metrics.json", rep.to_dict())
    outputs.append("metrics.json")
    return result, rep, outputs


def cmd_transfer(cfg, out):
    if cfg["method"] not in transfer.METHODS:
        raise UsageError(f"method must be one of {transfer.METHODS}", key="method")
    field, xc, xs, conds = _transfer_setup(cfg)
    tcfg = _transfer_config(cfg, conds, cfg["method"], cfg["branch"], cfg["inject"])
    result, _, outputs = _run_one(field, xc, xs, tcfg, cfg["method"], out)
    write_manifest(out, "transfer", cfg, outputs,
                   {"transfer": transfer.manifest(result, {"content": xc, "style": xs})})
    return 0


ABLATION = (("vanilla", "vanilla", "dual"), ("v1_content", "v1", "content_only"),
            ("v1_style", "v1", "style_only"), ("v1_dual", "v1", "dual"), ("v2", "v2", "dual"))


def cmd_ablate(cfg, out):
    field, xc, xs, conds = _transfer_setup(cfg)
    injects = (False, True) if hasattr(field, "velocity_injected") else (False,)
    rows, outputs, records = [], ["comparison.csv"], {}
    for inject in injects:
        for name, method, branch in ABLATION:
            tag = f"{name}_inject" if inject else name
            tcfg = _transfer_config(cfg, conds, method, branch, inject)
            result, rep, files = _run_one(field, xc, xs, tcfg, method, out / tag)
            rows.append((tag, rep))
            outputs += [f"{tag}/{f}" for f in files]
            records[tag] = transfer.manifest(result, {"content": xc, "style": xs})
    metrics.write_summary_csv(out / "comparison.csv", rows)
    write_manifest(out, "ablate", cfg, outputs, {"runs": records})
    return 0


def cmd_render_glyphs(cfg, out):
    paths = ds.dump_catalog(out)
    write_manifest(out, "render-glyphs", cfg, [p.name for p in paths])
    return 0


def cmd_verify(cfg, out):
    names = cfg["only"]
    if names:
        names = [names] if isinstance(names, str) else list(names)
        unknown = [n for n in names if n not in verify.CHECKS]
        if unknown:
            raise UsageError(f"unknown check {unknown[0]!r}", key="only")
    results = verify.run_checks(names)
    failed = [r[0] for r in results if not r[1]]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    if failed:
        print(json.dumps({"error": "check_failed", "check": failed[0]}), file=sys.stderr)
        return 1
    return 0


COMMANDS = {"train": cmd_train, "generate": cmd_generate, "invert": cmd_invert,
            "reconstruct": cmd_reconstruct, "transfer": cmd_transfer, "ablate": cmd_ablate,
            "verify": cmd_verify, "render-glyphs": cmd_render_glyphs}


class JsonArgumentParser(argparse.ArgumentParser):
    """Reports argument errors as JSON on stderr, exit status 2."""

    def error(self, message):
        self.exit(2, json.dumps({"error": "usage", "message": message, "key": None}) + "\n")


def build_parser():
    parser = JsonArgumentParser(prog="dualflow", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config or a previous manifest.json")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override one config key (value parsed as JSON)")
        p.add_argument("--out", help=f"output directory (default ${OUTPUT_ROOT_ENV}/{name})")
        p.add_argument("--seed", type=int)
        if name in ("generate", "invert", "reconstruct", "transfer", "ablate"):
            p.add_argument("--checkpoint")
            p.add_argument("--oracle", choices=("perfect_coupling", "delta_target"))
        if name in ("train", "generate", "invert", "reconstruct", "transfer", "ablate"):
            p.add_argument("--steps", type=int)
        if name in ("transfer", "ablate"):
            p.add_argument("--content")
            p.add_argument("--style")
            p.add_argument("--tau", type=float)
            p.add_argument("--lambda", dest="lambda_", type=float)
        if name == "transfer":
            p.add_argument("--method", choices=transfer.METHODS)
            p.add_argument("--branch", choices=transfer.BRANCH_MODES)
            p.add_argument("--inject", action="store_const", const=True)
        if name == "train":
            p.add_argument("--dataset", choices=tuple(TRAIN_PRESETS))
            p.add_argument("--field", choices=("dense", "attention"))
            p.add_argument("--lr", type=float)
            p.add_argument("--batch-size", dest="batch_size", type=int)
        if name == "generate":
            p.add_argument("--n", type=int)
            p.add_argument("--cond", type=int)
        if name in ("invert", "reconstruct"):
            p.add_argument("--input")
            p.add_argument("--cond", type=int)
        if name == "verify":
            p.add_argument("--only", action="append")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args.command, args)
        out = output_dir(args, args.command) if args.command != "verify" else None
        return COMMANDS[args.command](cfg, out)
    except UsageError as exc:
        print(json.dumps({"error": "usage", "message": str(exc), "key": exc.key}), file=sys.stderr)
        return 2
    except (TrainingDiverged, IntegrationError, FloatingPointError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
