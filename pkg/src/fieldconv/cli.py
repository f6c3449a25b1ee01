"""Deterministic experiment runner.

Subcommands
  run               execute a full JSON experiment config
  fit-field         fit a kernel field to a named target function
  train             train a backbone on copy-memory or adding
  eval-resolution   resolution-shift evaluation of a trained config
  analyze-spectrum  closed-form + measured frequency budget of a field
  report            consolidate run directories into report.json

Exit codes: 0 success, 2 configuration error, 3 numeric/training error.
The output directory may be overridden with FIELDCONV_OUT; everything
else comes from the config file for reproducibility.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import autodiff as ad
from . import report, spectral
from .fields import ConfigurationError, coord_grid, eval_field, magnet_new
from .masks import gaussian_mask
from .tasks import (
    BackboneConfig, TrainConfig, TrainingError, build_backbone,
    eval_resolution_shift, fit_field, make_adding, make_copy_memory,
    make_field_targets, train,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


class ConfigError(ValueError):
    """Configuration problem; message names the offending key path."""


def _need(cfg, key, path):
    if key not in cfg:
        raise ConfigError(f"missing required key: {path}.{key}")
    return cfg[key]


def _load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {path}: {exc}")


def _validate(cfg):
    task = _need(cfg, "task", "config")
    kind = _need(task, "kind", "config.task")
    if kind not in ("copy_memory", "adding", "fit_field"):
        raise ConfigError(f"config.task.kind: unknown kind {kind!r}")
    if "seed" not in cfg.get("train", {}):
        raise ConfigError("missing required key: config.train.seed")
    out = cfg.get("outputs", {}).get("dir")
    if not out:
        raise ConfigError("missing required key: config.outputs.dir")
    T = task.get("length", 100)
    if T < 1:
        raise ConfigError("config.task.length: must be >= 1")
    if cfg.get("train", {}).get("lr", 1e-3) <= 0:
        raise ConfigError("config.train.lr: must be positive")
    return cfg


def _out_dir(cfg):
    return os.environ.get("FIELDCONV_OUT") or cfg["outputs"]["dir"]


def _backbone_config(cfg, task_kind, T):
    m = cfg.get("model", {})
    if task_kind == "copy_memory":
        in_ch, out_ch, head, signal_len = 10, 10, "seq", T + 20
    else:
        in_ch, out_ch, head, signal_len = 2, 1, "last", T
    return BackboneConfig(
        in_channels=in_ch,
        hidden=m.get("hidden", 10 if task_kind == "copy_memory" else 16),
        out_channels=out_ch,
        blocks=m.get("blocks", 2),
        signal_len=signal_len,
        kernel_size=m.get("kernel_size"),
        field=m.get("field", "sine"),
        field_depth=m.get("field_depth", 3),
        field_hidden=m.get("field_hidden", 32),
        omega0=m.get("omega0", 30.0),
        alpha=m.get("alpha", 6.0),
        beta=m.get("beta", 1.0),
        mode=m.get("mode", "causal"),
        path=m.get("path", "auto"),
        nonlinearity=m.get("nonlinearity", "gelu"),
        weight_norm=m.get("weight_norm", True),
        flex=m.get("flex", False),
        arch_masks=m.get("arch_masks", False),
        head=head,
        seed=m.get("seed", 0),
    )


def _train_config(cfg, seed_override=None):
    t = cfg.get("train", {})
    seed = seed_override if seed_override is not None else t["seed"]
    return TrainConfig(
        lr=t.get("lr", 1e-3),
        steps=t.get("steps", 2000),
        batch_size=t.get("batch", 32),
        lambda_alias=t.get("lambda_alias", 0.0),
        alias_mode=t.get("alias_mode", "per_layer"),
        lambda_complexity=t.get("lambda_complexity", 0.0),
        complexity_target_ratio=t.get("complexity_target_ratio", 1.0),
        mask_lr_scale=t.get("mask_lr_scale", 1e-2),
        seed=seed,
        log_every=t.get("log_every", 25),
    )


def _dataset(task):
    kind = task["kind"]
    T = task.get("length", 100)
    n = task.get("samples", 512)
    seed = task.get("seed", 0)
    cache = task.get("cache")
    if cache:
        from .tasks import load_dataset, save_dataset

        prefix = os.path.join(cache, f"{kind}_T{T}_n{n}_s{seed}")
        try:
            return load_dataset(prefix, expect_kind=kind,
                                expect_meta={"T": T, "n": n, "seed": seed})
        except FileNotFoundError:
            pass
    if kind == "copy_memory":
        ds = make_copy_memory(T, n, seed)
    elif kind == "adding":
        ds = make_adding(T, n, seed)
    else:
        raise ConfigError(f"config.task.kind: no dataset for {kind!r}")
    if cache:
        os.makedirs(cache, exist_ok=True)
        save_dataset(ds, prefix)
    return ds


def _apply_precision(model, ds, precision):
    """Cast model parameters and dataset arrays to the training dtype."""
    if precision != "f32":
        return
    for p in model.parameters() + model.mask_parameters():
        p.data = p.data.astype(np.float32)
    if ds is not None:
        ds.inputs = ds.inputs.astype(np.float32) \
            if ds.inputs.dtype.kind == "f" else ds.inputs
        ds.targets = ds.targets.astype(np.float32) \
            if ds.targets.dtype.kind == "f" else ds.targets


def cmd_run(args):
    cfg = _validate(_load_config(args.config))
    task = cfg["task"]
    kind = task["kind"]
    out_dir = args.out or _out_dir(cfg)
    tc = _train_config(cfg, args.seed)
    if kind == "fit_field":
        return _run_fit_field(cfg, tc, out_dir)
    ds = _dataset(task)
    bc = _backbone_config(cfg, kind, task.get("length", 100))
    model = build_backbone(bc)
    _apply_precision(model, ds, args.precision)
    result = train(model, ds, tc)
    budgets = None
    if bc.field == "magnet":
        budgets = [
            (i + 1, spectral.frequency_budget(
                b.field, b.plan.kernel_size, size_mask=b.size_mask))
            for i, b in enumerate(model.blocks)
        ]
    architecture = None
    if model.arch is not None:
        from .archmask import architecture_snapshot

        architecture = architecture_snapshot(
            model.arch, bc.signal_len,
            kernel_masks=[b.size_mask for b in model.blocks]
            if bc.flex else None,
        )
    series = {"loss": result.loss_trace}
    if "complexity_ratio_trace" in result.extras:
        series["complexity_ratio"] = result.extras["complexity_ratio_trace"]
    payload = report.emit_run_outputs(
        out_dir, result, kind, budgets=budgets, architecture=architecture,
        series=series, figures=cfg.get("outputs", {}).get("figures", True),
    )
    print(json.dumps(payload["final_metrics"], sort_keys=True))
    return EXIT_OK


def _run_fit_field(cfg, tc, out_dir):
    task = cfg["task"]
    target_kind = task.get("target", "step")
    n = task.get("n_points", 256)
    target = make_field_targets(target_kind, n, task.get("seed", 0))
    m = cfg.get("model", {})
    field_kind = m.get("field", "sine")
    if field_kind == "magnet":
        field = magnet_new(
            m.get("field_depth", 3), m.get("field_hidden", 32), 1, 1, 1,
            alpha=m.get("alpha", 6.0), beta=m.get("beta", 1.0),
            seed=m.get("seed", 0),
        )
    else:
        from .fields import siren_new

        field = siren_new(
            m.get("field_depth", 3), m.get("field_hidden", 32), 1, 1, 1,
            omega0=m.get("omega0", 30.0), seed=m.get("seed", 0),
        )
    size_mask = None
    if m.get("flex", False):
        size_mask = gaussian_mask(n, sigma2=m.get("mask_sigma2", 0.125),
                                  hard=False)
    result = fit_field(
        field, target, steps=tc.steps, lr=tc.lr, size_mask=size_mask,
        lambda_alias=tc.lambda_alias, alias_mode=tc.alias_mode, seed=tc.seed,
        mask_lr_scale=tc.mask_lr_scale,
    )
    with ad.no_grad():
        fitted = eval_field(field, coord_grid(n, 1, "causal"))
        fitted = fitted.data.reshape(n)
        if size_mask is not None:
            from .masks import mask_eval

            fitted = fitted * mask_eval(
                size_mask, np.linspace(-1, 1, n)).data
    budgets = None
    if field.variant == "MAGNet":
        budgets = [(1, spectral.frequency_budget(field, n, size_mask))]
    payload = report.emit_run_outputs(
        out_dir, result, "fit_field", budgets=budgets,
        series={"loss": result.loss_trace},
        figures=cfg.get("outputs", {}).get("figures", True),
        fit_pair=(target, fitted),
    )
    print(json.dumps(payload["final_metrics"], sort_keys=True))
    return EXIT_OK


def cmd_fit_field(args):
    cfg = {
        "task": {"kind": "fit_field", "target": args.target,
                 "n_points": args.points, "seed": args.seed},
        "model": {"field": args.field, "flex": args.flex,
                  "omega0": args.omega0, "seed": args.seed},
        "train": {"steps": args.steps, "lr": args.lr, "seed": args.seed,
                  "lambda_alias": args.lambda_alias},
        "outputs": {"dir": args.out},
    }
    return _run_fit_field(cfg, _train_config(cfg), args.out)


def cmd_train(args):
    cfg = {
        "task": {"kind": args.task, "length": args.length,
                 "samples": args.samples, "seed": args.seed},
        "model": {"omega0": args.omega0, "hidden": args.hidden},
        "train": {"steps": args.steps, "lr": args.lr, "seed": args.seed},
        "outputs": {"dir": args.out},
    }
    _validate(cfg)
    return cmd_run_from_dict(cfg, args.out, precision=args.precision)


def cmd_run_from_dict(cfg, out_dir, precision="f64"):
    ds = _dataset(cfg["task"])
    bc = _backbone_config(cfg, cfg["task"]["kind"],
                          cfg["task"].get("length", 100))
    model = build_backbone(bc)
    _apply_precision(model, ds, precision)
    result = train(model, ds, _train_config(cfg))
    payload = report.emit_run_outputs(
        out_dir, result, cfg["task"]["kind"],
        series={"loss": result.loss_trace},
    )
    print(json.dumps(payload["final_metrics"], sort_keys=True))
    return EXIT_OK


def cmd_eval_resolution(args):
    cfg = _validate(_load_config(args.config))
    task = cfg["task"]
    if task["kind"] == "fit_field":
        raise ConfigError("config.task.kind: resolution eval needs a "
                          "sequence task")
    factor = args.factor
    if factor not in (2.0, 1.0, 0.5, 0.25):
        raise ConfigError("factor: must be one of 2, 1, 0.5, 0.25")
    ds = _dataset(task)
    bc = _backbone_config(cfg, task["kind"], task.get("length", 100))
    model = build_backbone(bc)
    tc = _train_config(cfg, args.seed)
    train(model, ds, tc)
    rep = eval_resolution_shift(model, ds, factor)
    out_dir = args.out or _out_dir(cfg)
    os.makedirs(out_dir, exist_ok=True)
    report.write_json(os.path.join(out_dir, "resolution_shift.json"), rep)
    print(json.dumps(rep, sort_keys=True))
    return EXIT_OK


def cmd_analyze_spectrum(args):
    field = magnet_new(args.depth, args.hidden, 1, 1, 1, seed=args.seed)
    k = args.kernel_size
    budget = spectral.frequency_budget(field, k)
    with ad.no_grad():
        taps = eval_field(field, coord_grid(4096, 1, "causal")).data
    measured_tail = spectral.power_above(taps, budget.f_plus_total)
    payload = {
        "f_plus_per_layer": budget.f_plus_per_layer,
        "f_plus_total": budget.f_plus_total,
        "f_nyquist": budget.f_nyquist,
        "measured_tail_power": measured_tail,
        "dominant_freq": spectral.dominant_freq(taps),
    }
    os.makedirs(args.out, exist_ok=True)
    header, rows = report.frequency_rows([(1, budget)])
    report.write_csv(os.path.join(args.out, "frequency_budget.csv"),
                     header, rows)
    report.write_json(os.path.join(args.out, "spectrum.json"), payload)
    report.plot_frequency_budget(
        [(1, budget)], os.path.join(args.out, "frequency_budget.png")
    )
    print(json.dumps(payload, sort_keys=True))
    return EXIT_OK


def cmd_report(args):
    payload = report.emit_report(args.results)
    print(json.dumps({"runs": sorted(payload["runs"]),
                      "all_succeeded": payload["all_succeeded"]},
                     sort_keys=True))
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(
        prog="fieldconv",
        description="continuous-kernel convolution experiments",
    )
    p.add_argument("--precision", choices=("f32", "f64"), default="f64",
                   help="float width for training loops")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a full JSON config")
    run.add_argument("--config", required=True)
    run.add_argument("--seed", type=int, default=None,
                     help="override config.train.seed")
    run.add_argument("--out", default=None, help="override output directory")
    run.set_defaults(fn=cmd_run)

    ff = sub.add_parser("fit-field", help="fit a kernel field to a target")
    ff.add_argument("--target", default="step",
                    choices=("gaussian", "step", "sawtooth", "sine_mixture",
                             "noise"))
    ff.add_argument("--field", default="sine", choices=("sine", "magnet"))
    ff.add_argument("--points", type=int, default=256)
    ff.add_argument("--steps", type=int, default=2000)
    ff.add_argument("--lr", type=float, default=1e-3)
    ff.add_argument("--omega0", type=float, default=30.0)
    ff.add_argument("--lambda-alias", type=float, default=0.0)
    ff.add_argument("--flex", action="store_true")
    ff.add_argument("--seed", type=int, default=0)
    ff.add_argument("--out", required=True)
    ff.set_defaults(fn=cmd_fit_field)

    tr = sub.add_parser("train", help="train on copy-memory or adding")
    tr.add_argument("--task", required=True, choices=("copy_memory", "adding"))
    tr.add_argument("--length", type=int, default=100)
    tr.add_argument("--samples", type=int, default=512)
    tr.add_argument("--steps", type=int, default=2000)
    tr.add_argument("--lr", type=float, default=1e-3)
    tr.add_argument("--omega0", type=float, default=19.2)
    tr.add_argument("--hidden", type=int, default=10)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--out", required=True)
    tr.set_defaults(fn=cmd_train)

    ev = sub.add_parser("eval-resolution", help="resolution-shift eval")
    ev.add_argument("--config", required=True)
    ev.add_argument("--factor", type=float, required=True)
    ev.add_argument("--seed", type=int, default=None)
    ev.add_argument("--out", default=None)
    ev.set_defaults(fn=cmd_eval_resolution)

    sp = sub.add_parser("analyze-spectrum", help="frequency budget of a field")
    sp.add_argument("--depth", type=int, default=3)
    sp.add_argument("--hidden", type=int, default=32)
    sp.add_argument("--kernel-size", type=int, default=33)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_analyze_spectrum)

    rp = sub.add_parser("report", help="consolidate run directories")
    rp.add_argument("--results", required=True)
    rp.set_defaults(fn=cmd_report)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    ad.set_default_dtype(
        np.float32 if args.precision == "f32" else np.float64
    )
    try:
        return args.fn(args)
    except (ConfigError, ConfigurationError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TrainingError, FloatingPointError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FileNotFoundError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    finally:
        ad.set_default_dtype(np.float64)


if __name__ == "__main__":
    sys.exit(main())
