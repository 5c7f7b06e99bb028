#!/usr/bin/env python3

import argparse
import logging
import sys
from typing import List

from rich.console import Console

from cli.commands import COMMANDS
from cli.run_config import COMMAND_CONFIGS, load_run_config
from synthgen.scene_spec import ILLUMINATION
from trainer.ablation import CONFIG_NAMES
from trainer.config import PRESETS
from utils.errors import ConfigError, ExitCode, RipeLocError
from utils.log import setup_logging

logger = logging.getLogger("ripeloc")

SUPPRESS = argparse.SUPPRESS


class ArgumentParser(argparse.ArgumentParser):
    """Reports usage errors as ConfigError so they share the error line and exit code."""

    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def positive_int(value):
    ivalue = int(value)
    if ivalue <= 0:
        raise argparse.ArgumentTypeError(f"{value} is not a positive integer")
    return ivalue


def add_flag(parser: argparse.ArgumentParser, name: str, **kwargs) -> None:
    """A settings flag; only flags actually given reach the config merge."""
    kwargs.setdefault("default", SUPPRESS)
    parser.add_argument(f"--{name.replace('_', '-')}", dest=name, **kwargs)


def add_training_flags(parser: argparse.ArgumentParser) -> None:
    add_flag(parser, "batch_size", type=positive_int, help="Images per step")
    add_flag(parser, "epoch_scale", type=float, help="Scale every phase's epochs, e.g. 0.1 for desk runs")
    add_flag(parser, "workers", type=int, help="Threads preparing batches (0 = inline)")
    add_flag(parser, "seed", type=int, help="Seed of every random stream")


def add_hsv_flags(parser: argparse.ArgumentParser) -> None:
    add_flag(parser, "hsv_h", type=float, help="Hue gain")
    add_flag(parser, "hsv_s", type=float, help="Saturation gain")
    add_flag(parser, "hsv_v", type=float, help="Value gain")
    add_flag(parser, "mixup_p", type=float, help="MixUp probability")
    add_flag(parser, "copypaste_p", type=float, help="Copy-paste probability")
    add_flag(parser, "erase_p", type=float, help="Random-erase probability")


def build_parser() -> argparse.ArgumentParser:
    parser = ArgumentParser(prog="ripeloc", description="RipeLoc Lite - ripeness detection and picking points")
    parser.add_argument("-v", "--verbose", action="store_true", help="Log debug messages")
    parser.add_argument("-q", "--quiet", action="store_true", help="Only log warnings and errors")
    parser.add_argument("--no-live", action="store_true", help="Disable live dashboards and progress bars")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    def command(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", default=None, help="JSON file of settings; flags override it")
        return p

    p = command("synth", "Render a synthetic greenhouse dataset with train/val/test splits")
    add_flag(p, "out", help="Dataset root to write")
    add_flag(p, "n_images", type=positive_int, help="Number of scenes (default: 1500)")
    add_flag(p, "image_size", type=positive_int, help="Scene extent in pixels (default: 96)")
    add_flag(p, "ratios", type=float, nargs=3, metavar=("TRAIN", "VAL", "TEST"), help="Split ratios")
    add_flag(p, "mean_instances", type=float, help="Mean fruit per scene")
    add_flag(p, "ripe_share", type=float, help="Probability of a fruit being ripe")
    add_flag(p, "occlusion_p", type=float, help="Probability of allowing partial occlusion")
    add_flag(p, "clutter_density", type=float, help="Leaf and stem density")
    add_flag(p, "illumination", choices=sorted(ILLUMINATION), help="Fixed illumination preset")
    add_flag(p, "green_on_green", action=argparse.BooleanOptionalAction, help="Clutter hue overlaps unripe fruit")
    add_flag(p, "image_format", choices=("png", "ppm"), help="Image file format")
    add_flag(p, "seed", type=int, help="Dataset seed")

    p = command("train", "Train a model on a dataset")
    add_flag(p, "data", help="Dataset root")
    add_flag(p, "out", help="Run directory for weights, log and incidents")
    add_flag(p, "preset", choices=sorted(PRESETS), help="Training recipe (default: three_phase)")
    add_flag(p, "width_multiple", type=float, help="Model width (0.125, 0.25, 0.5, 1.0)")
    add_flag(p, "input_size", type=positive_int, help="Input extent; images are letterboxed to it")
    add_flag(p, "neck", choices=("lfpn", "dense"), help="Neck variant")
    add_flag(p, "init_weights", help="Start from these weights")
    add_flag(p, "pretrain_images", type=int, help="Scenes of a class-agnostic warm-up (0 = none)")
    add_flag(p, "pretrain_epochs", type=positive_int, help="Epochs of the warm-up")
    add_flag(p, "lr0", type=float, help="Initial learning rate of the baseline recipe")
    add_flag(p, "lrf", type=float, help="Final learning rate of the baseline recipe")
    add_flag(p, "epochs", type=positive_int, help="Epochs of the baseline recipe")
    add_flag(p, "freeze_backbone", action=argparse.BooleanOptionalAction, help="Freeze layers 0-9 (baseline)")
    add_flag(p, "eval_every", type=positive_int, help="Validate every N epochs")
    add_flag(p, "max_incidents", type=int, help="Skipped steps tolerated before failing")
    add_hsv_flags(p)
    add_training_flags(p)

    p = command("eval", "Evaluate weights or a detection file on a split")
    add_flag(p, "data", help="Dataset root")
    add_flag(p, "out", help="Directory for metrics.json, pr.csv and center_hist.csv")
    add_flag(p, "weights", help="Model weights (RLW1)")
    add_flag(p, "detections", help="Detection text file to evaluate instead of a model")
    add_flag(p, "split", help="Split to evaluate (default: test)")
    add_flag(p, "input_size", type=positive_int, help="Input extent when evaluating a detection file")
    add_flag(p, "batch_size", type=positive_int, help="Images per forward pass")
    add_flag(p, "conf", type=float, help="Operating confidence threshold (default: 0.40)")
    add_flag(p, "iou", type=float, help="NMS IoU threshold (default: 0.45)")
    add_flag(p, "mm_per_px", type=float, help="Millimetres per pixel for center errors")

    p = command("prune", "Prune BatchNorm channels and optionally fine-tune")
    add_flag(p, "weights", help="Model weights (RLW1)")
    add_flag(p, "out", help="Directory for the pruned weights and report")
    add_flag(p, "ratio", type=float, help="Fraction of prunable channels to remove (default: 0.30)")
    add_flag(p, "min_channels", type=positive_int, help="Channels every group keeps")
    add_flag(p, "finetune_epochs", type=int, help="Fine-tuning epochs after pruning (0 = none)")
    add_flag(p, "data", help="Dataset root for fine-tuning")
    add_training_flags(p)

    p = command("infer", "Detect fruit and picking points on images")
    add_flag(p, "weights", help="Model weights (RLW1)")
    add_flag(p, "source", help="Image file or directory of .png/.ppm images")
    add_flag(p, "out", help="Directory for detections.txt and annotated images")
    add_flag(p, "conf", type=float, help="Confidence threshold")
    add_flag(p, "iou", type=float, help="NMS IoU threshold")
    add_flag(p, "save_images", action=argparse.BooleanOptionalAction, help="Write annotated images")

    p = command("flops", "Report parameters and FLOPs per module group")
    add_flag(p, "weights", help="Model weights; default builds a fresh model")
    add_flag(p, "width_multiple", type=float, help="Model width when no weights are given")
    add_flag(p, "input_size", type=positive_int, help="Input extent when no weights are given")
    add_flag(p, "neck", choices=("lfpn", "dense"), help="Neck variant when no weights are given")
    add_flag(p, "compare_dense", action=argparse.BooleanOptionalAction, help="Compare with a dense-conv neck")
    add_flag(p, "graph", help="Write the layer graph as DOT to this file")
    add_flag(p, "report", help="Write the figures as JSON to this file")

    p = command("augpreview", "Write augmented samples for inspection")
    add_flag(p, "data", help="Dataset root")
    add_flag(p, "out", help="Directory to write the preview split to")
    add_flag(p, "split", help="Split to sample from (default: train)")
    add_flag(p, "n_images", type=positive_int, help="Number of augmented samples")
    add_flag(p, "strength", choices=("heavy", "moderate", "light"), help="Pipeline strength")
    add_flag(p, "seed", type=int, help="Augmentation seed")
    add_hsv_flags(p)

    p = command("ablate", "Run the B0-B5 ablation")
    add_flag(p, "data", help="Dataset root")
    add_flag(p, "out", help="Directory for ablation.json")
    add_flag(p, "configs", nargs="+", choices=CONFIG_NAMES, help="Configurations to run")
    add_flag(p, "width_multiple", type=float, help="Model width")
    add_flag(p, "repeats", type=positive_int, help="Repeats with consecutive seeds, averaged")
    add_flag(p, "pretrain_images", type=int, help="Scenes of the class-agnostic warm-up")
    add_flag(p, "pretrain_epochs", type=positive_int, help="Epochs of the warm-up")
    add_flag(p, "eval_every", type=positive_int, help="Validate every N epochs")
    add_training_flags(p)
    return parser


def parse_args(args: List[str]) -> argparse.Namespace:
    """
    Parse command line arguments.

    Args:
        args: Command line arguments

    Returns:
        Parsed arguments

    Raises:
        ConfigError: On a usage error
    """
    return build_parser().parse_args(args)


def main(args: List[str] = None, console: Console = None) -> int:
    """
    Main entry point for RipeLoc.

    Args:
        args: Command line arguments
        console: Console for result tables, stdout by default

    Returns:
        Exit code
    """
    if args is None:
        args = sys.argv[1:]
    console = console or Console()

    try:
        parsed_args = parse_args(args)
        setup_logging(parsed_args.verbose, parsed_args.quiet)
        flags = {k: v for k, v in vars(parsed_args).items()
                 if k not in ("verbose", "quiet", "no_live", "command", "config")}
        config = load_run_config(COMMAND_CONFIGS[parsed_args.command], parsed_args.config, flags)
        config.prepare_paths()
        return COMMANDS[parsed_args.command](config, console, not parsed_args.no_live)
    except RipeLocError as exc:
        logger.debug("command failed", exc_info=True)
        print(exc.error_line(), file=sys.stderr)
        return exc.exit_code
    except KeyboardInterrupt:
        print('error code=1 kind=Interrupted message="interrupted"', file=sys.stderr)
        return ExitCode.USAGE


if __name__ == "__main__":
    sys.exit(main())
