"""
Main entry point for the sensor layout simulator.
Parses the command line, resolves configuration and runs one subcommand:

    simulate     render a sensor image of a field or image file
    gradcheck    compare the layout gradient with finite differences
    backwarp     resample a deformed-sensor output onto a uniform grid
    train        jointly train a layout and a digit classifier
    eval         evaluate a training checkpoint
    layout-svg   draw a layout

Every run writes manifest.json next to its outputs; `--replay` reruns it.
"""

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .grad.gradcheck import gradcheck
from .layout.deformation import LayoutKind, LayoutParams
from .layout.export import export_layout_svg, layout_to_dict, save_layout_json
from .layout.grid import SensorGrid
from .radiance.fields import ImageField, parse_field
from .radiance.image_io import ImageFormat, load_image, load_label_pgm, save_label_pgm, save_ppm
from .resample.backwarp import LabelImage, backwarp
from .sensor.sampling import QUADRATURE_RULES, SamplingConfig
from .sensor.simulation import simulate
from .train.dataset import load_mnist, synthetic_digits
from .train.trainer import (Checkpoint, TrainConfig, comparison_report, evaluate, load_checkpoint,
                            save_checkpoint, train_joint)
from .utils.config import Config
from .utils.errors import DomainError, SensorLayoutError, ToleranceError
from .utils.logger import setup_logging

logger = logging.getLogger(__name__)

MANIFEST_VERSION = 1
COMMANDS = ("simulate", "gradcheck", "backwarp", "train", "eval", "layout-svg")


@dataclass
class RunConfig:
    """A fully resolved invocation.

    options holds everything that determines the outputs and is recorded in
    the manifest; the remaining fields only affect speed and logging.
    """

    command: str
    options: dict
    output_dir: Path = Path("output")
    threads: int = 0
    log_level: int = logging.INFO
    log_dir: Optional[str] = None
    replayed_from: Optional[str] = None
    written: list = field(default_factory=list)


def _pair(text, name):
    try:
        values = [float(v) for v in str(text).split(",")]
    except ValueError:
        raise DomainError(f"{name} expects two comma-separated numbers, got '{text}'")
    if len(values) != 2:
        raise DomainError(f"{name} expects two comma-separated numbers, got '{text}'")
    return values


def _size(text, name):
    try:
        width, height = (int(v) for v in str(text).lower().split("x"))
    except ValueError:
        raise DomainError(f"{name} must look like WxH, got '{text}'")
    if width < 1 or height < 1:
        raise DomainError(f"{name} must be positive, got '{text}'")
    return [width, height]


def _add_common(parser, suppress):
    default = (lambda value: argparse.SUPPRESS) if suppress else (lambda value: value)
    parser.add_argument("--output-dir", default=default("output"), help="Directory for all outputs")
    parser.add_argument("--config", default=default(None), help="JSON configuration file")
    parser.add_argument("--threads", type=int, default=default(None), help="Worker threads (0 = all cores)")
    parser.add_argument("--seed", type=int, default=default(None), help="Master random seed")
    parser.add_argument("-v", "--verbose", action="store_true", default=default(False), help="Debug logging")
    parser.add_argument("-q", "--quiet", action="store_true", default=default(False), help="Warnings only")
    parser.add_argument("--log-dir", default=default(None), help="Also write a log file here")


def _add_layout(parser, with_grid=True):
    if with_grid:
        parser.add_argument("--grid", help="Sensor resolution R1xR2, e.g. 4x4")
    parser.add_argument("--kind", help="curvilinear | rectangular | identity")
    group = parser.add_mutually_exclusive_group()
    group.add_argument("--theta", help="Layout parameters in (-1, 1), e.g. 0.5,0.3")
    group.add_argument("--theta-raw", help="Unconstrained layout parameters (theta = tanh(theta_raw))")


def _add_sampling(parser):
    parser.add_argument("--strata", type=int, help="n for an n x n stratified grid per pixel")
    parser.add_argument("--boundary-samples", type=int, help="Samples per pixel edge")
    parser.add_argument("--no-jitter", action="store_true", help="Use a deterministic quadrature instead of jitter")
    parser.add_argument("--rule", choices=QUADRATURE_RULES, help="Quadrature used with --no-jitter")


def _add_data(parser, train):
    if train:
        parser.add_argument("--train-images", help="MNIST training images (IDX)")
        parser.add_argument("--train-labels", help="MNIST training labels (IDX)")
        parser.add_argument("--train-limit", type=int, help="Use only the first N training images")
    parser.add_argument("--test-images", help="MNIST test images (IDX)")
    parser.add_argument("--test-labels", help="MNIST test labels (IDX)")
    parser.add_argument("--test-limit", type=int, help="Use only the first N test images")
    parser.add_argument("--synthetic", type=int, help="Use N procedural digits instead of MNIST")


def build_parser():
    parser = argparse.ArgumentParser(prog="sensorlayout",
                                     description="Differentiable simulation of non-uniform pixel layouts")
    _add_common(parser, suppress=False)
    parser.add_argument("--replay", help="Rerun the command recorded in a manifest.json")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("simulate", help="Simulate a sensor image")
    _add_common(p, suppress=True)
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--image", help="PNG/PPM/PGM radiance image")
    source.add_argument("--field", help="Analytic field: constant:r,g,b | ramp[:axis] | blob[:cx,cy,s] | checker[:f]")
    _add_layout(p)
    _add_sampling(p)

    p = sub.add_parser("gradcheck", help="Check the layout gradient against finite differences")
    _add_common(p, suppress=True)
    p.add_argument("--field", default="blob", help="Radiance field descriptor or image path")
    _add_layout(p)
    _add_sampling(p)
    p.add_argument("--fd-step", type=float, help="Central-difference step in theta_raw")
    p.add_argument("--tolerance", type=float, help="Largest accepted relative error")
    p.add_argument("--upstream-seed", type=int, default=0, help="Seed of the random upstream gradient")

    p = sub.add_parser("backwarp", help="Resample a sensor output onto a uniform grid")
    _add_common(p, suppress=True)
    p.add_argument("--input", required=True, help="PPM sensor output or PGM label map (width = R1)")
    p.add_argument("--target", required=True, help="Target size WxH")
    p.add_argument("--classes", type=int, help="Class count for label maps")
    _add_layout(p, with_grid=False)

    p = sub.add_parser("train", help="Jointly train a layout and a classifier")
    _add_common(p, suppress=True)
    _add_layout(p)
    _add_sampling(p)
    _add_data(p, train=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float, help="Adam learning rate")
    p.add_argument("--batch-size", type=int)
    p.add_argument("--freeze-layout-epochs", type=int, help="Keep theta fixed for the first N epochs")
    p.add_argument("--channels", type=int, choices=(1, 3), help="Classifier input channels")
    p.add_argument("--baseline", action="store_true", help="Train with the uniform layout only")
    p.add_argument("--compare", action="store_true", help="Also train the uniform baseline and compare")

    p = sub.add_parser("eval", help="Evaluate a checkpoint")
    _add_common(p, suppress=True)
    p.add_argument("--checkpoint", required=True, help="checkpoint.json written by train")
    _add_data(p, train=False)

    p = sub.add_parser("layout-svg", help="Draw a layout as SVG")
    _add_common(p, suppress=True)
    _add_layout(p)
    p.add_argument("--density", type=int, default=0, help="Shade pixel density at this resolution")
    p.add_argument("--size", type=int, default=512, help="Canvas size in px")
    return parser


def _resolve_layout(args, settings, with_grid=True):
    layout_cfg = settings.get_layout_config()
    kind = LayoutKind.parse(args.kind or layout_cfg["kind"])
    if args.theta is not None:
        theta_raw = LayoutParams.from_theta(kind, _pair(args.theta, "--theta")).theta_raw
    elif args.theta_raw is not None:
        theta_raw = LayoutParams.from_raw(kind, _pair(args.theta_raw, "--theta-raw")).theta_raw
    else:
        theta_raw = (0.0, 0.0)
    layout = {"kind": kind.value, "theta_raw": list(theta_raw)}
    if with_grid:
        grid = SensorGrid.parse(args.grid) if args.grid else SensorGrid(layout_cfg["r1"], layout_cfg["r2"])
        layout["grid"] = str(grid)
    return layout


def _resolve_sampling(args, settings):
    cfg = SamplingConfig.from_dict(settings.get_sampling_config(),
                                   interior_strata=args.strata,
                                   boundary_samples=args.boundary_samples,
                                   rng_seed=args.seed,
                                   jitter=False if args.no_jitter else None,
                                   rule=args.rule)
    return cfg.to_dict()


def _resolve_data(args, train):
    data = {
        "test_images": args.test_images,
        "test_labels": args.test_labels,
        "test_limit": args.test_limit,
        "synthetic": args.synthetic,
    }
    if train:
        data.update(train_images=args.train_images, train_labels=args.train_labels,
                    train_limit=args.train_limit)
        if args.synthetic is None and not (args.train_images and args.train_labels):
            raise DomainError("train needs --train-images and --train-labels, or --synthetic N")
    elif args.synthetic is None and not (args.test_images and args.test_labels):
        raise DomainError("eval needs --test-images and --test-labels, or --synthetic N")
    if args.synthetic is not None and args.synthetic < 1:
        raise DomainError("--synthetic needs a positive count")
    return data


def _resolve_options(args, settings):
    command = args.command
    if command == "simulate":
        return {"layout": _resolve_layout(args, settings), "sampling": _resolve_sampling(args, settings),
                "image": args.image, "field": args.field}

    if command == "gradcheck":
        check_cfg = settings.get_gradcheck_config()
        fd_step = args.fd_step if args.fd_step is not None else check_cfg["fd_step"]
        tolerance = args.tolerance if args.tolerance is not None else check_cfg["tolerance"]
        if not fd_step > 0.0 or not tolerance > 0.0:
            raise DomainError("--fd-step and --tolerance must be positive")
        return {"layout": _resolve_layout(args, settings), "sampling": _resolve_sampling(args, settings),
                "field": args.field, "fd_step": fd_step, "tolerance": tolerance,
                "upstream_seed": args.upstream_seed}

    if command == "backwarp":
        return {"layout": _resolve_layout(args, settings, with_grid=False), "input": args.input,
                "target": _size(args.target, "--target"), "classes": args.classes}

    if command == "train":
        training = settings.get_training_config()
        if args.seed is not None:
            training.update(shuffle_seed=args.seed, init_seed=args.seed, sensor_seed=args.seed)
        train_cfg = TrainConfig.from_dict(training, epochs=args.epochs, learning_rate=args.lr,
                                          batch_size=args.batch_size,
                                          layout_freeze_epochs=args.freeze_layout_epochs,
                                          channels=args.channels, baseline=args.baseline or None)
        if args.baseline and args.compare:
            raise DomainError("--baseline and --compare cannot be combined")
        return {"layout": _resolve_layout(args, settings), "sampling": _resolve_sampling(args, settings),
                "training": train_cfg.to_dict(), "data": _resolve_data(args, train=True),
                "compare": args.compare, "seed": args.seed if args.seed is not None else 0}

    if command == "eval":
        return {"checkpoint": args.checkpoint, "data": _resolve_data(args, train=False),
                "seed": args.seed if args.seed is not None else 0}

    return {"layout": _resolve_layout(args, settings), "density": args.density, "size": args.size}


def _log_level(args, settings):
    if args.verbose:
        return logging.DEBUG
    if args.quiet:
        return logging.WARNING
    return getattr(logging, str(settings.get_runtime_config()["log_level"]).upper(), logging.INFO)


def load_manifest(path):
    """Read a manifest written by a previous run."""
    with open(path, "r") as f:
        try:
            manifest = json.load(f)
        except json.JSONDecodeError as e:
            raise DomainError(f"{path} is not a valid manifest: {e}")
    if manifest.get("format_version") != MANIFEST_VERSION or manifest.get("command") not in COMMANDS:
        raise DomainError(f"{path} is not a recognised manifest")
    return manifest


def parse_args(argv=None):
    """Parse and validate a command line into a RunConfig.

    Raises:
        SystemExit: on unknown flags (argparse usage error)
        DomainError: on out-of-range or conflicting values
    """
    parser = build_parser()
    args = parser.parse_args(argv)

    settings = Config.load(args.config) if args.config else Config()
    runtime = settings.get_runtime_config()
    threads = args.threads if args.threads is not None else runtime["threads"]
    if threads < 0:
        raise DomainError(f"--threads must be >= 0, got {threads}")
    common = dict(output_dir=Path(args.output_dir), threads=threads,
                  log_level=_log_level(args, settings), log_dir=args.log_dir)

    if args.replay:
        manifest = load_manifest(args.replay)
        return RunConfig(command=manifest["command"], options=manifest["options"],
                         replayed_from=args.replay, **common)
    if args.command is None:
        parser.error("a subcommand or --replay is required")
    return RunConfig(command=args.command, options=_resolve_options(args, settings), **common)


def write_json(path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def _layout(options):
    layout = options["layout"]
    params = LayoutParams.from_raw(layout["kind"], layout["theta_raw"])
    grid = SensorGrid.parse(layout["grid"]) if "grid" in layout else None
    return grid, params


def _field(options):
    if options.get("image"):
        return ImageField(load_image(options["image"]))
    return parse_field(options["field"])


def _datasets(data, seed):
    if data.get("synthetic"):
        count = data["synthetic"]
        train_set = synthetic_digits(count, seed=seed)
        test_set = synthetic_digits(max(count // 5, 1), seed=seed + 1, split="test")
    else:
        train_set = None
        if data.get("train_images"):
            train_set = load_mnist(data["train_images"], data["train_labels"], "train")
        test_set = None
        if data.get("test_images"):
            test_set = load_mnist(data["test_images"], data["test_labels"], "test")
    if train_set is not None:
        train_set = train_set.subset(data.get("train_limit"))
    if test_set is not None:
        test_set = test_set.subset(data.get("test_limit"))
    return train_set, test_set


def cmd_simulate(config):
    options = config.options
    grid, params = _layout(options)
    cfg = SamplingConfig.from_dict(options["sampling"])
    radiance = _field(options)
    image = simulate(radiance, grid, params, cfg, threads=config.threads)

    out = config.output_dir
    config.written.append(save_ppm(out / "sensor.ppm", image.to_rgb_image()))
    config.written.append(write_json(out / "sensor.json", {
        "layout": layout_to_dict(grid, params),
        "sampling": cfg.to_dict(),
        "field": radiance.describe(),
        "pixels": image.pixels.tolist(),
        "volumes": image.volumes.tolist(),
        "volumes_sum": image.volumes_sum,
    }))
    logger.info(f"Simulated {grid} sensor, pixel volume sum {image.volumes_sum:.6f}")


def cmd_gradcheck(config):
    options = config.options
    grid, params = _layout(options)
    cfg = SamplingConfig.from_dict(options["sampling"])
    radiance = parse_field(options["field"])
    path = config.output_dir / "gradcheck.json"
    try:
        report = gradcheck(radiance, grid, params, cfg, upstream_seed=options["upstream_seed"],
                           fd_step=options["fd_step"], tolerance=options["tolerance"],
                           threads=config.threads, raise_on_failure=True)
    except ToleranceError as e:
        config.written.append(write_json(path, e.report))
        raise
    config.written.append(write_json(path, report))


def cmd_backwarp(config):
    options = config.options
    _, params = _layout(options)
    source = Path(options["input"])
    target_w, target_h = options["target"]
    out = config.output_dir

    if ImageFormat.from_path(source) is ImageFormat.PGM:
        labels = LabelImage.from_raster(load_label_pgm(source), options.get("classes"))
        result = backwarp(labels, params, target_w, target_h)
        config.written.append(save_label_pgm(out / "backwarp.pgm", result.to_raster()))
    else:
        rgb = LabelImage.from_raster(load_image(source).to_rgb())
        result = backwarp(rgb, params, target_w, target_h)
        config.written.append(save_ppm(out / "backwarp.ppm", result.to_raster()))


def cmd_train(config):
    options = config.options
    grid, params = _layout(options)
    cfg = SamplingConfig.from_dict(options["sampling"])
    train_cfg = TrainConfig.from_dict(options["training"])
    train_set, test_set = _datasets(options["data"], options["seed"])
    out = config.output_dir

    learned = train_joint(train_set, grid, params.kind, train_cfg, cfg, test_set, config.threads,
                          theta_raw=params.theta_raw)
    metrics = {
        "layout": layout_to_dict(grid, learned.params),
        "history": learned.history,
        "final_accuracy": learned.final_accuracy,
        "train_size": len(train_set),
        "test_size": len(test_set) if test_set is not None else 0,
    }
    if options.get("compare"):
        baseline = train_joint(train_set, grid, params.kind, TrainConfig.from_dict(options["training"], baseline=True),
                               cfg, test_set, config.threads)
        metrics["comparison"] = comparison_report(grid, params.kind, baseline, learned)

    config.written.append(write_json(out / "metrics.json", metrics))
    config.written.append(save_checkpoint(out / "checkpoint.json", Checkpoint(
        params=learned.params, grid=grid, classifier=learned.classifier, train_cfg=train_cfg,
        sampling_cfg=cfg, history=learned.history)))
    config.written.append(export_layout_svg(out / "layout.svg", grid, learned.params))


def cmd_eval(config):
    options = config.options
    checkpoint = load_checkpoint(options["checkpoint"])
    _, test_set = _datasets(options["data"], options["seed"])
    if test_set is None:
        raise DomainError("no evaluation split given")
    accuracy = evaluate(test_set, checkpoint.params, checkpoint.classifier, checkpoint.grid,
                        checkpoint.sampling_cfg, checkpoint.train_cfg.channels, threads=config.threads)
    config.written.append(write_json(config.output_dir / "eval.json", {
        "accuracy": accuracy,
        "examples": len(test_set),
        "layout": layout_to_dict(checkpoint.grid, checkpoint.params),
    }))
    logger.info(f"Accuracy {accuracy:.4f} on {len(test_set)} examples")


def cmd_layout_svg(config):
    options = config.options
    grid, params = _layout(options)
    out = config.output_dir
    config.written.append(export_layout_svg(out / "layout.svg", grid, params, size=options["size"],
                                            density_resolution=options["density"]))
    config.written.append(save_layout_json(out / "layout.json", grid, params))


HANDLERS = {
    "simulate": cmd_simulate,
    "gradcheck": cmd_gradcheck,
    "backwarp": cmd_backwarp,
    "train": cmd_train,
    "eval": cmd_eval,
    "layout-svg": cmd_layout_svg,
}


def run(config):
    """Execute a RunConfig.

    Returns:
        Process exit code: 0 on success, 2 for I/O errors, 3 for invalid
        input, 4 when a tolerance check fails, 1 otherwise
    """
    try:
        config.output_dir.mkdir(parents=True, exist_ok=True)
        write_json(config.output_dir / "manifest.json", {
            "format_version": MANIFEST_VERSION,
            "command": config.command,
            "options": config.options,
        })
        HANDLERS[config.command](config)
    except SensorLayoutError as e:
        logger.error(f"{config.command} failed: {e}")
        return e.exit_code
    except OSError as e:
        logger.error(f"{config.command} failed: {e}")
        return 2
    except Exception as e:
        logger.exception(f"Unexpected error in {config.command}: {e}")
        return 1

    logger.info(f"{config.command} finished, outputs in {config.output_dir}")
    return 0


def main(argv=None):
    """Main entry point for the command line."""
    try:
        config = parse_args(argv)
    except SensorLayoutError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"error: invalid configuration: {e}", file=sys.stderr)
        return DomainError.exit_code

    setup_logging(config.log_level, config.log_dir)
    if config.replayed_from:
        logger.info(f"Replaying {config.command} from {config.replayed_from}")
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
