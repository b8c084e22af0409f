"""Command-line interface: reproducible synth/train/eval/battery runs.

Configuration is layered: baked-in defaults (matching the reference training
protocol where it states a value), then a flat key=value config file given
with --config, then explicit CLI flags.  Unknown config keys are errors.
All randomness flows from the single --seed: head initialization uses
2*seed, the training loop (shuffling, dropout) uses 2*seed + 1, and battery
run k repeats that scheme with seed + k.

Exit codes: 0 success, 1 runtime failure (missing files, numeric aborts),
2 usage errors.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import figures
from .dataio import (
    LABEL_NAMES,
    DatasetError,
    SynthSpec,
    generate_synthetic,
    load_dataset,
    write_dataset,
    write_sidecar,
)
from .gaussian import AffineMap
from .head import (
    QUALITY_DIMS,
    HeadConfig,
    load_checkpoint,
    predict,
    save_checkpoint,
)
from .losses import VARIANTS, NumericFailure
from .metrics import (
    aggregate_reports,
    emit_correlation_scatter,
    emit_marginal_grid,
    evaluate,
    write_battery_csv,
    write_battery_text,
    write_report_csv,
    write_report_text,
    write_table,
)
from .training import TrainConfig, train, write_trace


class UsageError(ValueError):
    """Bad flag/config values; maps to exit code 2."""


class CliError(RuntimeError):
    """Runtime failure; maps to exit code 1."""


# -- value parsers shared by CLI flags and config files ----------------------

def _parse_int(text):
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None


def _parse_pos_int(text):
    value = _parse_int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _parse_nonneg_int(text):
    value = _parse_int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return value


def _parse_float(text):
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None


def _parse_nonneg_float(text):
    value = _parse_float(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return value


def _parse_unit_float(text):
    value = _parse_float(text)
    if not 0.0 <= value < 1.0:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1), got {value}")
    return value


def _parse_variant(text):
    if text not in VARIANTS:
        raise argparse.ArgumentTypeError(
            f"variant must be one of {', '.join(VARIANTS)}")
    return text


def _parse_hidden(text):
    text = text.strip()
    if not text:
        return ()
    try:
        dims = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"hidden_dims must be comma-separated integers, got {text!r}"
        ) from None
    if any(d < 1 for d in dims):
        raise argparse.ArgumentTypeError("hidden layer widths must be >= 1")
    return dims


def _parse_bool(text):
    lowered = str(text).strip().lower()
    if lowered in ("1", "true", "yes"):
        return True
    if lowered in ("0", "false", "no"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


def _parse_pair(text):
    names = [t.strip() for t in str(text).split(",")]
    if len(names) != 2 or names[0] == names[1] \
            or any(n not in LABEL_NAMES for n in names):
        raise argparse.ArgumentTypeError(
            f"expected two distinct dimension names from "
            f"{','.join(LABEL_NAMES)}, got {text!r}")
    return LABEL_NAMES.index(names[0]), LABEL_NAMES.index(names[1])


def _parse_str(text):
    return str(text)


# Per-command key schema: key -> (parser, default, required, help).
_TRAIN_KEYS = {
    "train": (_parse_str, None, True, "training dataset CSV"),
    "val": (_parse_str, None, False, "validation dataset CSV"),
    "checkpoint": (_parse_str, None, True, "output checkpoint path"),
    "variant": (_parse_variant, "full", False,
                "head variant: full, independent, or mse"),
    "epochs": (_parse_pos_int, 30, False, "training epochs"),
    "learning_rate": (_parse_nonneg_float, 1e-4, False, "Adam learning rate"),
    "batch_size": (_parse_pos_int, 32, False, "mini-batch size"),
    "hidden_dims": (_parse_hidden, (256, 64), False,
                    "comma-separated hidden widths; empty for a linear head"),
    "dropout": (_parse_unit_float, 0.0, False, "hidden-layer dropout rate"),
    "seed": (_parse_int, 0, False, "master seed for init/shuffle/dropout"),
    "no_affine": (_parse_bool, False, False,
                  "disable the output map (A=I, b=0)"),
}

_SYNTH_KEYS = {
    "n": (_parse_pos_int, 5000, True, "number of training samples"),
    "d": (_parse_pos_int, 32, False, "feature dimension"),
    "holdout_n": (_parse_nonneg_int, 0, False,
                  "additional holdout samples (0 to skip)"),
    "seed": (_parse_int, 0, False, "generator seed"),
    "out": (_parse_str, None, True, "output directory"),
}

_EVAL_KEYS = {
    "checkpoint": (_parse_str, None, True, "checkpoint to evaluate"),
    "data": (_parse_str, None, True, "evaluation dataset CSV"),
    "out": (_parse_str, None, True, "report output directory"),
    "tag": (_parse_str, None, False, "row label (defaults to the variant)"),
    "variant": (_parse_variant, None, False,
                "expected variant; mismatch with the checkpoint is an error"),
    "grid": (_parse_pair, None, False,
             "emit a marginal density grid for a dimension pair, e.g. mos,noi"),
    "grid_sample": (_parse_nonneg_int, 0, False,
                    "sample index whose prediction feeds the grid"),
    "scatter": (_parse_pair, None, False,
                "emit a correlation scatter table for a pair, e.g. mos,noi"),
    "no_affine": (_parse_bool, False, False,
                  "evaluate with the output map disabled (A=I, b=0)"),
}

_BATTERY_KEYS = dict(_TRAIN_KEYS)
_BATTERY_KEYS.pop("checkpoint")
_BATTERY_KEYS.pop("val")
_BATTERY_KEYS.update({
    "holdout": (_parse_str, None, True, "holdout dataset CSV for evaluation"),
    "runs": (_parse_pos_int, 10, False, "independent runs (>= 2)"),
    "out": (_parse_str, None, True, "report output directory"),
    "tag": (_parse_str, None, False, "row label (defaults to the variant)"),
})


def _load_config_file(path, keys):
    """Flat key=value file; unknown keys and bad values are usage errors."""
    entries = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}: line {lineno}: expected key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in keys:
            raise UsageError(f"{path}: line {lineno}: unknown key {key!r}")
        try:
            entries[key] = keys[key][0](value)
        except argparse.ArgumentTypeError as exc:
            raise UsageError(f"{path}: line {lineno}: {key}: {exc}") from exc
    return entries


def _merge(args, keys):
    """CLI flag > config file > default; then required-key check."""
    file_values = {}
    if getattr(args, "config", None):
        file_values = _load_config_file(args.config, keys)
    merged = {}
    for key, (_, default, required, _) in keys.items():
        cli_value = getattr(args, key)
        if cli_value is not None:
            merged[key] = cli_value
        elif key in file_values:
            merged[key] = file_values[key]
        else:
            merged[key] = default
        if required and merged[key] is None:
            raise UsageError(f"missing required option --{key.replace('_', '-')}")
    return merged


def _add_keys(sub, keys):
    sub.add_argument("--config", default=None, metavar="FILE",
                     help="key=value config file; flags override it")
    for key, (parser_fn, default, _, help_text) in keys.items():
        flag = "--" + key.replace("_", "-")
        if parser_fn is _parse_bool:
            sub.add_argument(flag, nargs="?", const=True, default=None,
                             type=_parse_bool, metavar="BOOL",
                             help=f"{help_text} (default: {default})")
        else:
            shown = default
            if isinstance(default, tuple):
                shown = ",".join(str(v) for v in default)
            sub.add_argument(flag, default=None, type=parser_fn, metavar=key.upper(),
                             help=f"{help_text} (default: {shown})")


def _affine(no_affine: bool) -> AffineMap:
    if no_affine:
        return AffineMap.identity(QUALITY_DIMS)
    return AffineMap.default()


def _require_file(path, what):
    if not os.path.isfile(path):
        raise CliError(f"{what} not found: {path}")


def _train_one(cfg, seed: int):
    _require_file(cfg["train"], "training dataset")
    data = load_dataset(cfg["train"], strict=False)
    val = None
    if cfg.get("val"):
        _require_file(cfg["val"], "validation dataset")
        val = load_dataset(cfg["val"], strict=False)
    head_cfg = HeadConfig(
        input_dim=data[0].features.size,
        hidden_dims=cfg["hidden_dims"],
        variant=cfg["variant"],
        dropout_rate=cfg["dropout"],
        seed=2 * seed,
    )
    train_cfg = TrainConfig(
        learning_rate=cfg["learning_rate"],
        epochs=cfg["epochs"],
        batch_size=cfg["batch_size"],
        seed=2 * seed + 1,
        variant=cfg["variant"],
        affine=_affine(cfg["no_affine"]),
    )
    model, records = train(data, val, head_cfg, train_cfg)
    return model, records, train_cfg


def cmd_synth(args) -> int:
    cfg = _merge(args, _SYNTH_KEYS)
    spec = SynthSpec.default(input_dim=cfg["d"], seed=cfg["seed"])
    total = cfg["n"] + cfg["holdout_n"]
    samples = generate_synthetic(spec, total, cfg["seed"])
    os.makedirs(cfg["out"], exist_ok=True)
    write_dataset(os.path.join(cfg["out"], "train.csv"), samples[:cfg["n"]])
    if cfg["holdout_n"]:
        write_dataset(os.path.join(cfg["out"], "holdout.csv"),
                      samples[cfg["n"]:])
    write_sidecar(os.path.join(cfg["out"], "truth.txt"), spec)
    print(f"synth: n={cfg['n']} holdout={cfg['holdout_n']} d={cfg['d']} "
          f"seed={cfg['seed']} -> {cfg['out']}")
    return 0


def cmd_train(args) -> int:
    cfg = _merge(args, _TRAIN_KEYS)
    model, records, _ = _train_one(cfg, cfg["seed"])
    ckpt_dir = os.path.dirname(os.path.abspath(cfg["checkpoint"]))
    os.makedirs(ckpt_dir, exist_ok=True)
    save_checkpoint(model, cfg["checkpoint"])
    trace_path = cfg["checkpoint"] + ".trace.txt"
    write_trace(records, trace_path)
    figures.render_trace(records, cfg["checkpoint"] + ".trace.png",
                         title=cfg["variant"])
    last = records[-1]
    val_part = (f" val_loss={last.val_loss:.6g}"
                if last.val_loss is not None else "")
    print(f"train: variant={cfg['variant']} epochs={cfg['epochs']} "
          f"train_loss={last.train_loss:.6g}{val_part} -> {cfg['checkpoint']}")
    return 0


def cmd_eval(args) -> int:
    cfg = _merge(args, _EVAL_KEYS)
    _require_file(cfg["checkpoint"], "checkpoint")
    _require_file(cfg["data"], "dataset")
    model = load_checkpoint(cfg["checkpoint"])
    if cfg["variant"] is not None and cfg["variant"] != model.config.variant:
        raise CliError(
            f"checkpoint variant {model.config.variant!r} does not match "
            f"requested variant {cfg['variant']!r}")
    data = load_dataset(cfg["data"], strict=False)
    amap = _affine(cfg["no_affine"])
    report = evaluate(model, data, amap)
    tag = cfg["tag"] or model.config.variant
    os.makedirs(cfg["out"], exist_ok=True)
    text_path = os.path.join(cfg["out"], "report.txt")
    write_report_text(text_path, [(tag, report)])
    write_report_csv(os.path.join(cfg["out"], "report.csv"), [(tag, report)])
    if cfg["grid"] is not None:
        i, j = cfg["grid"]
        if cfg["grid_sample"] >= len(data):
            raise CliError(
                f"grid sample index {cfg['grid_sample']} out of range "
                f"for {len(data)} samples")
        g = predict(model, data[cfg["grid_sample"]].features, amap).gaussian
        header, rows = emit_marginal_grid(g, (i, j))
        stem = f"marginal_{LABEL_NAMES[i]}_{LABEL_NAMES[j]}"
        write_table(os.path.join(cfg["out"], stem + ".csv"), header, rows)
        figures.render_marginal_grid(
            header, rows, os.path.join(cfg["out"], stem + ".png"), title=tag)
    if cfg["scatter"] is not None:
        i, j = cfg["scatter"]
        header, rows = emit_correlation_scatter(model, data, amap, (i, j))
        stem = f"scatter_{LABEL_NAMES[i]}_{LABEL_NAMES[j]}"
        write_table(os.path.join(cfg["out"], stem + ".csv"), header, rows)
        figures.render_correlation_scatter(
            header, rows, os.path.join(cfg["out"], stem + ".png"), title=tag)
    print(f"eval: n={report.sample_count} avg_rmse={report.rmse_avg:.6g} "
          f"-> {text_path}")
    return 0


def cmd_battery(args) -> int:
    cfg = _merge(args, _BATTERY_KEYS)
    if cfg["runs"] < 2:
        raise UsageError("battery needs --runs >= 2")
    _require_file(cfg["holdout"], "holdout dataset")
    holdout = load_dataset(cfg["holdout"], strict=False)
    amap = _affine(cfg["no_affine"])
    reports = []
    for k in range(cfg["runs"]):
        model, _, _ = _train_one(cfg, cfg["seed"] + k)
        reports.append(evaluate(model, holdout, amap))
    battery = aggregate_reports(reports)
    tag = cfg["tag"] or cfg["variant"]
    os.makedirs(cfg["out"], exist_ok=True)
    text_path = os.path.join(cfg["out"], "battery.txt")
    write_battery_text(text_path, tag, battery)
    write_battery_csv(os.path.join(cfg["out"], "battery.csv"), tag, battery)
    print(f"battery: runs={battery.runs} avg_rmse={battery.rmse_avg_mean:.6g} "
          f"±{battery.rmse_avg_std:.6g} -> {text_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gaussmos",
        description="Multivariate Gaussian quality-score regression: "
                    "synthesize data, train heads, evaluate, run seed batteries.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    sp = subs.add_parser("synth", help="generate a synthetic dataset + sidecar")
    _add_keys(sp, _SYNTH_KEYS)
    sp.set_defaults(func=cmd_synth)

    sp = subs.add_parser("train", help="train one head, write checkpoint + trace")
    _add_keys(sp, _TRAIN_KEYS)
    sp.set_defaults(func=cmd_train)

    sp = subs.add_parser("eval", help="evaluate a checkpoint, write report tables")
    _add_keys(sp, _EVAL_KEYS)
    sp.set_defaults(func=cmd_eval)

    sp = subs.add_parser("battery", help="multi-seed train/eval aggregation")
    _add_keys(sp, _BATTERY_KEYS)
    sp.set_defaults(func=cmd_battery)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (CliError, DatasetError, NumericFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
