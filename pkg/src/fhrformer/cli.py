"""Command-line entry point: ``fhrformer <subcommand> [flags]``.

Every subcommand writes into ``--out`` and echoes the effective run config
there as ``config.json``.  Failures print one line
``fhrformer: error: <Kind>: <message>`` to stderr and exit nonzero
(2 for usage and configuration problems, 1 for everything else).
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .apps import (
    build_dataset,
    forecast_interval,
    generate_synthetic,
    inpaint,
    read_dataset,
    write_dataset,
)
from .errors import ConfigError, FHRFormerError
from .metrics import METRIC_KEYS
from .model import FHRFormer, load_checkpoint, save_checkpoint
from .prep import denormalize, prepare, read_raw_csv, write_raw_csv
from .presets import PRESETS, RunConfig, resolve
from .trainer import evaluate, fit, sweep, write_sweep_table

log = logging.getLogger("fhrformer")

SUBCOMMANDS = ("synth", "prep", "train", "sweep", "eval", "inpaint", "forecast")


class UsageError(ConfigError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _preset_table() -> str:
    rows = [
        ("patch_size", "model"), ("signal_length", "model"), ("d_model", "model"),
        ("ffn_dim", "model"), ("encoder_layers", "model"), ("decoder_layers", "model"),
        ("heads", "model"), ("dropout", "model"), ("mask_ratio", "model"), ("input_norm", "model"),
        ("batch_size", "train"), ("learning_rate", "train"), ("weight_decay", "train"),
        ("max_epochs", "train"), ("early_stop_patience", "train"), ("scheduler_patience", "train"),
        ("alpha", "train"), ("beta", "train"), ("count", "run"), ("context_len", "run"),
        ("step", "run"), ("horizon", "run"), ("passes", "run"),
    ]
    lines = [f"  {'key':<22}{'toy':>12}{'paper':>12}"]
    for key, section in rows:
        toy = getattr(getattr(PRESETS["toy"], section), key)
        paper = getattr(getattr(PRESETS["paper"], section), key)
        lines.append(f"  {key:<22}{toy!s:>12}{paper!s:>12}")
    return "preset defaults:\n" + "\n".join(lines)


def _default(section: str, key: str) -> str:
    toy = getattr(getattr(PRESETS["toy"], section), key)
    paper = getattr(getattr(PRESETS["paper"], section), key)
    return f"(default: {toy})" if toy == paper else f"(default: toy {toy}, paper {paper})"


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="key = value file applied over the preset (default: none)")
    common.add_argument("--preset", choices=sorted(PRESETS), default="toy", help="base configuration (default: toy)")
    common.add_argument("--seed", type=int, help=f"root seed for every random sub-stream {_default('train', 'seed')}")
    common.add_argument("--patch-size", type=int, help=f"patch size p_s {_default('model', 'patch_size')}")
    common.add_argument("--mask-ratio", type=float, help=f"masking ratio gamma {_default('model', 'mask_ratio')}")
    common.add_argument("--out", metavar="DIR", default="run", help="output directory (default: run)")
    common.add_argument("--plot", action="store_true", help="also render PNG figures (default: off)")
    common.add_argument(
        "--set", metavar="KEY=VALUE", action="append", default=[],
        help="override any config key, repeatable (default: none)",
    )

    parser = _Parser(
        prog="fhrformer",
        description="Masked transformer autoencoder for fetal heart rate signals.",
        epilog=_preset_table() + "\n\nFHRF_THREADS caps the BLAS thread count.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    fmt = argparse.RawDescriptionHelpFormatter
    epilog = _preset_table()

    p = sub.add_parser("synth", parents=[common], formatter_class=fmt, epilog=epilog, help="generate a synthetic corpus")
    p.add_argument("--count", type=int, help=f"number of episodes {_default('run', 'count')}")
    p.add_argument("--raw", action="store_true", help="also write raw per-episode CSV files (default: off)")

    p = sub.add_parser("prep", parents=[common], formatter_class=fmt, epilog=epilog, help="prepare raw CSV episodes")
    p.add_argument("--input", required=True, help="directory of sample_index,fhr_bpm CSV files")

    p = sub.add_parser("train", parents=[common], formatter_class=fmt, epilog=epilog, help="train one model")
    p.add_argument("--data", required=True, help="directory with train.fhrd and val.fhrd")

    p = sub.add_parser("sweep", parents=[common], formatter_class=fmt, epilog=epilog, help="patch size x mask ratio grid")
    p.add_argument("--data", required=True, help="directory with train/val/test .fhrd files")
    p.add_argument("--patch-sizes", default="30,60,120,240,480", help="comma-separated patch sizes (default: %(default)s)")
    p.add_argument("--mask-ratios", default="0.15", help="comma-separated mask ratios (default: %(default)s)")

    p = sub.add_parser("eval", parents=[common], formatter_class=fmt, epilog=epilog, help="compute the eight metrics")
    p.add_argument("--checkpoint", required=True, help="model checkpoint (.fhrf)")
    p.add_argument("--dataset", required=True, help="dataset container (.fhrd) to evaluate on")

    p = sub.add_parser("inpaint", parents=[common], formatter_class=fmt, epilog=epilog, help="fill missing samples")
    p.add_argument("--checkpoint", required=True, help="model checkpoint (.fhrf)")
    p.add_argument("--input", required=True, help="raw episode CSV")

    p = sub.add_parser("forecast", parents=[common], formatter_class=fmt, epilog=epilog, help="recursive forecast with a 95%% band")
    p.add_argument("--checkpoint", required=True, help="model checkpoint (.fhrf)")
    p.add_argument("--input", required=True, help="raw episode CSV; its last context_len samples are the context")
    p.add_argument("--horizon", type=int, help=f"samples to forecast {_default('run', 'horizon')}")
    p.add_argument("--step", type=int, help=f"samples per recursive step {_default('run', 'step')}")
    p.add_argument("--context-len", type=int, help=f"context window {_default('run', 'context_len')}")
    p.add_argument("--passes", type=int, help=f"stochastic dropout passes {_default('run', 'passes')}")
    return parser


def _overrides(args) -> dict:
    values = {
        "seed": args.seed,
        "patch_size": args.patch_size,
        "mask_ratio": args.mask_ratio,
        "count": getattr(args, "count", None),
        "horizon": getattr(args, "horizon", None),
        "step": getattr(args, "step", None),
        "context_len": getattr(args, "context_len", None),
        "passes": getattr(args, "passes", None),
    }
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        values[key.strip()] = value
    return values


def _require(path: str | Path) -> Path:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"{path} does not exist")
    return path


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _write_splits(splits: dict, out: Path) -> None:
    for name, container in splits.items():
        write_dataset(container, out / f"{name}.fhrd")


# -- subcommands -------------------------------------------------------------------
def cmd_synth(args, cfg: RunConfig, out: Path) -> None:
    spec = cfg.synth.replace(seed=cfg.train.seed)
    raw = generate_synthetic(spec, cfg.run.count)
    if args.raw:
        (out / "raw").mkdir(exist_ok=True)
        for record in raw:
            write_raw_csv(record, out / "raw" / f"{record.episode_id}.csv")
    _write_splits(build_dataset(raw, cfg.run.ratios, cfg.model.signal_length, cfg.train.seed), out)


def cmd_prep(args, cfg: RunConfig, out: Path) -> None:
    files = sorted(_require(args.input).glob("*.csv"))
    if not files:
        raise FileNotFoundError(f"no CSV files in {args.input}")
    raw = [read_raw_csv(f) for f in files]
    _write_splits(build_dataset(raw, cfg.run.ratios, cfg.model.signal_length, cfg.train.seed), out)


def cmd_train(args, cfg: RunConfig, out: Path) -> None:
    data = _require(args.data)
    train = read_dataset(_require(data / "train.fhrd"))
    val = read_dataset(_require(data / "val.fhrd"))
    model = FHRFormer(cfg.model, seed=cfg.train.seed)
    result = fit(model, train, val, cfg.train.replace(mask_ratio=cfg.model.mask_ratio),
                 out / "best.fhrf", out / "train_log.csv")
    save_checkpoint(result.model, out / "model.fhrf")
    if args.plot:
        from .plotting import plot_history

        plot_history(result.history, out / "train_log.png")


def cmd_sweep(args, cfg: RunConfig, out: Path) -> None:
    data = _require(args.data)
    splits = [read_dataset(_require(data / f"{name}.fhrd")) for name in ("train", "val", "test")]
    try:
        patch_sizes = [int(v) for v in args.patch_sizes.split(",")]
        ratios = [float(v) for v in args.mask_ratios.split(",")]
    except ValueError as exc:
        raise UsageError(f"bad grid specification: {exc}") from exc
    rows = sweep(patch_sizes, ratios, *splits, cfg.model, cfg.train, out)
    write_sweep_table(rows, out / "sweep.csv")


def cmd_eval(args, cfg: RunConfig, out: Path) -> None:
    model = load_checkpoint(_require(args.checkpoint))
    data = read_dataset(_require(args.dataset))
    report = evaluate(model, data, cfg.model.mask_ratio, mask_seed=cfg.train.seed)
    _write_csv(out / "metrics.csv", METRIC_KEYS, [[repr(getattr(report, k)) for k in METRIC_KEYS]])
    (out / "metrics.txt").write_text(report.to_text())
    print(report.to_text(), end="")


def cmd_inpaint(args, cfg: RunConfig, out: Path) -> None:
    model = load_checkpoint(_require(args.checkpoint))
    record = read_raw_csv(_require(args.input))
    n = record.samples.shape[0]
    length = model.config.signal_length
    signal = prepare(record, length)
    filled = inpaint(model, signal)
    bpm = denormalize(filled.values.astype(np.float64))
    offset = length - n
    rows = [(i - offset, f"{bpm[i]:.3f}", int(filled.missing_mask[i])) for i in range(max(offset, 0), length)]
    _write_csv(out / "inpainted.csv", ("sample_index", "value", "observed"), rows)
    if args.plot:
        from .plotting import plot_inpaint

        plot_inpaint(denormalize(signal.values.astype(np.float64)), bpm, filled.missing_mask, out / "inpainted.png")


def cmd_forecast(args, cfg: RunConfig, out: Path) -> None:
    model = load_checkpoint(_require(args.checkpoint))
    record = read_raw_csv(_require(args.input))
    run = cfg.run
    signal = prepare(record, record.samples.shape[0])
    # Drop leading samples so the context splits into whole patches.
    context = signal.values[signal.length % model.config.patch_size:]
    result = forecast_interval(
        model, context, run.horizon, run.step, run.context_len, 0, run.passes, cfg.train.seed,
    )
    start = signal.length
    rows = [
        (start + i, f"{denormalize(result.mean[i]):.3f}", f"{denormalize(result.lower95[i]):.3f}",
         f"{denormalize(result.upper95[i]):.3f}")
        for i in range(run.horizon)
    ]
    _write_csv(out / "forecast.csv", ("sample_index", "value", "lower95", "upper95"), rows)
    if args.plot:
        from .plotting import plot_forecast

        plot_forecast(denormalize(context.astype(np.float64)), result, out / "forecast.png")


COMMANDS = {
    "synth": cmd_synth,
    "prep": cmd_prep,
    "train": cmd_train,
    "sweep": cmd_sweep,
    "eval": cmd_eval,
    "inpaint": cmd_inpaint,
    "forecast": cmd_forecast,
}


def _thread_limit():
    value = os.environ.get("FHRF_THREADS")
    if not value:
        return None
    try:
        threads = int(value)
    except ValueError:
        raise ConfigError(f"FHRF_THREADS must be an integer, got {value!r}") from None
    if threads < 1:
        raise ConfigError("FHRF_THREADS must be >= 1")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=threads)


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("FHRF_LOG", "WARNING"), format="%(name)s %(levelname)s %(message)s")
    try:
        args = build_parser().parse_args(argv)
        cfg = resolve(args.preset, args.config, _overrides(args))
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.json").write_text(cfg.to_json() + "\n")
        limiter = _thread_limit()
        try:
            COMMANDS[args.command](args, cfg, out)
        finally:
            if limiter is not None:
                limiter.restore_original_limits()
    except (UsageError, ConfigError) as exc:
        print(f"fhrformer: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except (FHRFormerError, OSError, ValueError) as exc:
        print(f"fhrformer: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
