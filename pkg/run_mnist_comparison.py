#!/usr/bin/env python3
# run_mnist_comparison.py - Uniform vs learned layout on digit classification

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from src.layout.grid import SensorGrid
from src.sensor.sampling import SamplingConfig
from src.train.dataset import load_mnist, synthetic_digits
from src.train.trainer import TrainConfig, compare_layouts
from src.utils.config import Config
from src.utils.errors import DomainError, SensorLayoutError
from src.utils.logger import setup_logging

logger = logging.getLogger("sensorlayout.comparison")

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte.gz", "train-labels-idx1-ubyte.gz"),
    "test": ("t10k-images-idx3-ubyte.gz", "t10k-labels-idx1-ubyte.gz"),
}


def load_data(args, seed):
    """Load MNIST from --mnist-dir, or procedural digits with --synthetic."""
    if args.synthetic:
        return (synthetic_digits(args.synthetic, seed=seed),
                synthetic_digits(max(args.synthetic // 5, 1), seed=seed + 1, split="test"))

    root = Path(args.mnist_dir)
    train_set = load_mnist(*(root / name for name in MNIST_FILES["train"]), split="train")
    test_set = load_mnist(*(root / name for name in MNIST_FILES["test"]), split="test")
    return train_set.subset(args.train_limit), test_set.subset(args.test_limit)


def parse_seeds(text):
    try:
        seeds = [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise DomainError(f"--seeds expects comma-separated integers, got '{text}'")
    if not seeds or min(seeds) < 0:
        raise DomainError(f"--seeds expects non-negative integers, got '{text}'")
    return seeds


def summarize(runs):
    """Aggregate per-seed reports by (grid, kind).

    theta_positive is True when every seed learned theta_1 > 0 and theta_2 > 0.
    """
    groups = {}
    for run in runs:
        groups.setdefault((run["grid"], run["kind"]), []).append(run)

    summary = []
    for (grid, kind), group in groups.items():
        baseline = np.array([r["baseline_accuracy"] for r in group])
        learned = np.array([r["learned_accuracy"] for r in group])
        thetas = np.array([r["learned_theta"] for r in group])
        summary.append({
            "grid": grid,
            "kind": kind,
            "seeds": [r["seed"] for r in group],
            "baseline_accuracy": baseline.tolist(),
            "learned_accuracy": learned.tolist(),
            "mean_baseline_accuracy": float(baseline.mean()),
            "mean_learned_accuracy": float(learned.mean()),
            "mean_margin": float((learned - baseline).mean()),
            "learned_theta": thetas.tolist(),
            "theta_positive": bool(np.all(thetas > 0.0)),
        })
    return summary


def main():
    parser = argparse.ArgumentParser(description="Compare the uniform pixel layout with learned layouts")
    parser.add_argument("--mnist-dir", default="data/mnist", help="Directory with the four MNIST IDX files")
    parser.add_argument("--synthetic", type=int, help="Use N procedural digits instead of MNIST")
    parser.add_argument("--train-limit", type=int, help="Use only the first N training images")
    parser.add_argument("--test-limit", type=int, help="Use only the first N test images")
    parser.add_argument("--grids", default="4x4", help="Comma-separated sensor resolutions")
    parser.add_argument("--kinds", default="curv,rect", help="Comma-separated layout kinds")
    parser.add_argument("--epochs", type=int, help="Training epochs per arm")
    parser.add_argument("--seeds", default="0,1,2", help="Comma-separated seeds; both arms share each seed")
    parser.add_argument("--threads", type=int, default=0, help="Worker threads (0 = all cores)")
    parser.add_argument("--output", default="output/comparison.json", help="Result file")
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    args = parser.parse_args()

    setup_logging(logging.DEBUG if args.verbose else logging.INFO, "logs")
    settings = Config()

    try:
        seeds = parse_seeds(args.seeds)
        runs = []
        for seed in seeds:
            train_cfg = TrainConfig.from_dict(settings.get_training_config(), epochs=args.epochs,
                                              shuffle_seed=seed, init_seed=seed, sensor_seed=seed)
            sampling_cfg = SamplingConfig.from_dict(settings.get_sampling_config(), rng_seed=seed)
            train_set, test_set = load_data(args, seed)
            for grid_text in args.grids.split(","):
                grid = SensorGrid.parse(grid_text)
                for kind in args.kinds.split(","):
                    logger.info(f"=== seed {seed}: {grid} {kind} ===")
                    report = compare_layouts(train_set, test_set, grid, kind, train_cfg, sampling_cfg,
                                             args.threads)
                    report["seed"] = seed
                    logger.info(f"seed {seed} {grid} {kind}: uniform {report['baseline_accuracy']:.4f}, "
                                f"learned {report['learned_accuracy']:.4f}, theta {report['learned_theta']}")
                    runs.append(report)
    except (SensorLayoutError, OSError) as e:
        logger.error(f"Comparison failed: {e}")
        return getattr(e, "exit_code", 2)

    summary = summarize(runs)
    output = Path(args.output)
    output.parent.mkdir(parents=True, exist_ok=True)
    with open(output, "w") as f:
        json.dump({"seeds": seeds, "train_config": train_cfg.to_dict(), "sampling": sampling_cfg.to_dict(),
                   "runs": runs, "summary": summary}, f, indent=2, sort_keys=True)
        f.write("\n")

    print("\n seed  grid   kind          uniform   learned   margin   theta")
    for report in runs:
        print(f" {report['seed']:<5} {report['grid']:<6} {report['kind']:<12} {report['baseline_accuracy']:>8.4f} "
              f"{report['learned_accuracy']:>9.4f} {report['margin']:>+8.4f}   "
              f"({report['learned_theta'][0]:+.3f}, {report['learned_theta'][1]:+.3f})")
    print("\n grid   kind          mean uniform  mean learned  theta > 0 on every seed")
    for entry in summary:
        print(f" {entry['grid']:<6} {entry['kind']:<12} {entry['mean_baseline_accuracy']:>12.4f} "
              f"{entry['mean_learned_accuracy']:>13.4f}  {'yes' if entry['theta_positive'] else 'NO'}")
        if not entry["theta_positive"]:
            logger.warning(f"{entry['grid']} {entry['kind']}: learned theta not positive on every seed: "
                           f"{entry['learned_theta']}")
    logger.info(f"Results written to {output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
