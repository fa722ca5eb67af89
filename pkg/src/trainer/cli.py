"""
MSFNet CLI - train, evaluate, infer, gradient-check, dump the wiring, generate data.

Usage:
    python -m src.trainer.cli train --preset desk --samples 8 --metrics runs/metrics.csv
    python -m src.trainer.cli eval --checkpoint runs/last.msfn --json
    python -m src.trainer.cli infer --checkpoint runs/last.msfn --left l.png --right r.png --out disp
    python -m src.trainer.cli gradcheck
    python -m src.trainer.cli dumpgraph --set width_multiplier=1 --set height=384 --set width=768
    python -m src.trainer.cli gen-data --out data/random_dot --count 64
"""

import argparse
import asyncio
import sys
from pathlib import Path
from typing import Optional, Sequence

import orjson
import structlog

from ..data.dataset import DirectoryDataset, SyntheticDataset, write_dataset
from ..data.images import export_disparity_image, load_image
from ..data.pfm import save_pfm
from ..network.msfnet import MSFNet, describe_network
from ..shared.config import load_train_config, parse_overrides, settings
from ..shared.errors import ConfigurationError, MsfnetError
from ..shared.logs import configure_logging
from ..shared.schemas import IterationRecord, TrainConfig
from .checkpoint import Checkpoint, load_checkpoint
from .gradsuite import format_table, run_gradient_suite
from .loop import Trainer, evaluate_sharded

logger = structlog.get_logger()


def _print_header(title: str) -> None:
    print("=" * 60)
    print(f"  {title}")
    print("=" * 60)


def _json(payload) -> None:
    sys.stdout.write(orjson.dumps(payload, option=orjson.OPT_INDENT_2).decode() + "\n")


def _config(args: argparse.Namespace) -> TrainConfig:
    return load_train_config(args.config, args.preset or "desk", parse_overrides(args.set))


def _synthetic_max_disp(config: TrainConfig, requested: Optional[int]) -> int:
    if requested is not None:
        return requested
    return config.width // 8


def _dataset(args: argparse.Namespace, config: TrainConfig, seed_offset: int = 0):
    if args.data:
        crop = None
        if config.crop_height and config.crop_width:
            crop = (config.crop_height, config.crop_width)
        return DirectoryDataset(args.data, rule=config.filter_rule(), crop=crop, seed=config.seed)
    return SyntheticDataset(
        count=args.samples,
        height=config.height,
        width=config.width,
        max_disp=_synthetic_max_disp(config, args.max_disp),
        shape_count=args.shapes,
        seed=config.seed + seed_offset,
    )


# =============================================================================
# Subcommands
# =============================================================================


def _resume_config(args: argparse.Namespace, checkpoint: Checkpoint) -> TrainConfig:
    """The checkpoint's config; explicit config flags must agree with it."""
    if not (args.config or args.set or args.preset):
        return checkpoint.config
    stored = checkpoint.config.model_dump(exclude={"iterations"})
    requested = _config(args).model_dump(exclude={"iterations"})
    differing = sorted(key for key in stored if stored[key] != requested[key])
    if differing:
        raise ConfigurationError(
            f"{args.resume} was written with a different configuration: {', '.join(differing)}"
        )
    return checkpoint.config


def cmd_train(args: argparse.Namespace) -> int:
    checkpoint = load_checkpoint(args.resume) if args.resume else None
    config = _resume_config(args, checkpoint) if checkpoint else _config(args)
    dataset = _dataset(args, config)
    trainer = Trainer(config, dataset, checkpoint_dir=args.checkpoint_dir, metrics_path=args.metrics)
    if checkpoint:
        trainer.restore(checkpoint)

    def show(record: IterationRecord) -> None:
        if args.verbose:
            print(record.csv_row())

    _print_header("MSFNet training")
    records = trainer.train(args.iterations, on_record=show)
    report = trainer.evaluate(dataset)
    print(f"Iterations:       {trainer.iteration}")
    if records:
        print(f"Final loss:       {records[-1].loss:.4f}")
    print(f"Training EPE:     {report.epe:.4f} px")
    print(f"3-pixel error:    {report.three_px:.2f}%")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    checkpoint = load_checkpoint(args.checkpoint)
    config = checkpoint.config
    network = MSFNet(config).materialize()
    network.params.load_state_dict(checkpoint.params)
    dataset = _dataset(args, config, seed_offset=args.split_offset)

    report = asyncio.run(evaluate_sharded(network, dataset, args.workers or settings.eval_workers))
    if args.json:
        _json(report.model_dump(mode="json"))
        return 0

    _print_header("MSFNet evaluation")
    print(f"Checkpoint:       {args.checkpoint} (iteration {checkpoint.iteration})")
    print(f"Samples:          {len(report.samples)}")
    print(f"EPE:              {report.epe:.4f} px")
    print(f"3-pixel error:    {report.three_px:.2f}%")
    print(f"D1:               {report.d1:.2f}%")
    print(f"Seconds/sample:   {report.seconds_per_iteration:.3f}")
    return 0


def cmd_infer(args: argparse.Namespace) -> int:
    left = load_image(args.left)
    right = load_image(args.right)

    if args.checkpoint:
        checkpoint = load_checkpoint(args.checkpoint)
        network = MSFNet(checkpoint.config).materialize()
        network.params.load_state_dict(checkpoint.params)
    else:
        network = MSFNet(_config(args))

    disparity = network(left, right).final
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_pfm(disparity.full_resolution(), out.with_suffix(".pfm"))
    max_disp = args.max_disp or network.config.width // 4
    export_disparity_image(disparity, out.with_suffix(f".{args.format}"), max_disp)
    print(f"Wrote {out.with_suffix('.pfm')} and {out.with_suffix('.' + args.format)}")
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    results = run_gradient_suite(seed=args.seed, tolerance=args.tolerance, names=args.op or ())
    if args.json:
        _json([r.model_dump() for r in results])
    else:
        _print_header("Gradient check (float64, central differences)")
        print(format_table(results))
    return 0 if all(r.passed for r in results) else 1


def cmd_dumpgraph(args: argparse.Namespace) -> int:
    text = describe_network(_config(args))
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_gen_data(args: argparse.Namespace) -> int:
    config = _config(args)
    dataset = SyntheticDataset(
        count=args.count,
        height=args.height or config.height,
        width=args.width or config.width,
        max_disp=_synthetic_max_disp(config, args.max_disp),
        shape_count=args.shapes,
        seed=config.seed,
    )
    written = asyncio.run(write_dataset(dataset, args.out or settings.data_dir, args.workers))
    print(f"Wrote {written} samples to {args.out or settings.data_dir}")
    return 0


# =============================================================================
# Parser
# =============================================================================


def _add_config_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key=value config file")
    parser.add_argument("--preset", help="desk (default), sceneflow or kitti")
    parser.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")


def _add_data_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--data", help="left/right/disp dataset directory (default: random-dot samples)")
    parser.add_argument("--samples", type=int, default=8, help="random-dot sample count")
    parser.add_argument("--max-disp", type=int, help="random-dot maximum disparity in pixels")
    parser.add_argument("--shapes", type=int, default=3, help="random-dot rectangles per sample")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="msfnet", description="Multi-scale fusion stereo network")
    parser.add_argument("--log-level", default=None, help="override MSFNET_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train on random-dot or directory data")
    _add_config_options(train)
    _add_data_options(train)
    train.add_argument("--iterations", type=int, help="stop after this many iterations in total")
    train.add_argument("--checkpoint-dir", default=settings.checkpoint_dir)
    train.add_argument("--metrics", help="CSV file for per-iteration rows")
    train.add_argument("--resume", help="checkpoint to resume from")
    train.add_argument("--verbose", action="store_true", help="print every metrics row")
    train.set_defaults(handler=cmd_train)

    ev = sub.add_parser("eval", help="evaluate a checkpoint at batch size 1")
    _add_data_options(ev)
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--split-offset", type=int, default=0, help="seed offset for a held-out random-dot split")
    ev.add_argument("--workers", type=int, help="evaluation shards")
    ev.add_argument("--json", action="store_true", help="emit the report as JSON")
    ev.set_defaults(handler=cmd_eval)

    infer = sub.add_parser("infer", help="disparity for one stereo pair")
    _add_config_options(infer)
    infer.add_argument("--checkpoint", help="trained weights (default: fresh initialization)")
    infer.add_argument("--left", required=True)
    infer.add_argument("--right", required=True)
    infer.add_argument("--out", default="disparity", help="output path without suffix")
    infer.add_argument("--format", choices=("png", "pgm"), default="png")
    infer.add_argument("--max-disp", type=float, help="disparity mapped to white")
    infer.set_defaults(handler=cmd_infer)

    grad = sub.add_parser("gradcheck", help="finite-difference check of every operator")
    grad.add_argument("--seed", type=int, default=0)
    grad.add_argument("--tolerance", type=float, default=1e-5)
    grad.add_argument("--op", action="append", help="restrict to an operator")
    grad.add_argument("--json", action="store_true")
    grad.set_defaults(handler=cmd_gradcheck)

    dump = sub.add_parser("dumpgraph", help="write the layer wiring table")
    _add_config_options(dump)
    dump.add_argument("--out", help="file to write (default: stdout)")
    dump.set_defaults(handler=cmd_dumpgraph)

    gen = sub.add_parser("gen-data", help="write a random-dot dataset")
    _add_config_options(gen)
    gen.add_argument("--out", help="target directory (default: MSFNET_DATA_DIR)")
    gen.add_argument("--count", type=int, default=64)
    gen.add_argument("--height", type=int)
    gen.add_argument("--width", type=int)
    gen.add_argument("--max-disp", type=int)
    gen.add_argument("--shapes", type=int, default=3)
    gen.add_argument("--workers", type=int, default=4)
    gen.set_defaults(handler=cmd_gen_data)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level or settings.log_level)
    logger.debug("Command started", command=args.command)

    try:
        return args.handler(args)
    except (MsfnetError, OSError) as e:
        print(f"msfnet {args.command}: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
