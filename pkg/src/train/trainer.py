"""
Joint training of the pixel layout and a classifier.

Each step pushes a mini-batch of images through the simulated sensor,
classifies the pixel values, and back-propagates the loss into both the
classifier weights and the unconstrained layout parameters theta_raw.
"""

import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from .classifier import MLPClassifier, cross_entropy
from .dataset import NUM_CLASSES
from .optimizer import Adam
from ..grad.backward import backward
from ..layout.deformation import LayoutKind, LayoutParams
from ..layout.grid import SensorGrid
from ..radiance.fields import ImageStackField
from ..sensor.sampling import SamplingConfig
from ..sensor.simulation import simulate
from ..utils.errors import DatasetError, DomainError

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
LAYOUT_PARAM = "theta_raw"


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 14
    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 64
    layout_freeze_epochs: int = 0
    shuffle_seed: int = 0
    init_seed: int = 0
    sensor_seed: int = 0
    channels: int = 1
    hidden: Tuple[int, ...] = (128, 64)
    baseline: bool = False

    def __post_init__(self):
        if self.epochs < 1:
            raise DomainError(f"epochs must be >= 1, got {self.epochs}")
        if not self.learning_rate > 0.0:
            raise DomainError(f"learning rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1:
            raise DomainError(f"batch size must be >= 1, got {self.batch_size}")
        if self.layout_freeze_epochs < 0:
            raise DomainError("layout_freeze_epochs must be >= 0")
        if self.channels not in (1, 3):
            raise DomainError(f"channels must be 1 or 3, got {self.channels}")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    @classmethod
    def from_dict(cls, values, **overrides):
        names = {f for f in cls.__dataclass_fields__}
        merged = {key: value for key, value in values.items() if key in names}
        merged.update({key: value for key, value in overrides.items() if value is not None})
        return cls(**merged)

    def to_dict(self):
        """Plain dict of the settings with hidden as a list."""
        data = asdict(self)
        data["hidden"] = list(self.hidden)
        return data


@dataclass
class TrainResult:
    params: LayoutParams
    classifier: MLPClassifier
    history: List[dict] = field(default_factory=list)

    @property
    def final_accuracy(self):
        return self.history[-1].get("test_accuracy") if self.history else None


def step_seed(master_seed, step):
    """Sensor sampling seed for one training step."""
    return int(np.random.SeedSequence([master_seed, step]).generate_state(1, dtype=np.uint64)[0])


def input_dim(grid, channels):
    return grid.r1 * grid.r2 * channels


def sensor_features(images, grid, params, cfg, channels=1, threads=1, interpolation="bilinear"):
    """Simulate a batch of images and flatten the pixel values.

    Returns:
        (features (B, D), SensorImage, ForwardCache, field)
    """
    stack = ImageStackField(images, interpolation)
    image, cache = simulate(stack, grid, params, cfg, threads=threads, return_cache=True)
    pixels = image.pixels if channels == 3 else image.pixels[..., :1]
    return pixels.reshape(pixels.shape[0], -1), image, cache, stack


def features_to_upstream(dfeatures, image, channels=1):
    """Scatter feature gradients back onto the (B, r1, r2, 3) pixel array."""
    upstream = np.zeros(image.pixels.shape)
    if channels == 3:
        upstream[...] = dfeatures.reshape(upstream.shape)
    else:
        upstream[..., 0] = dfeatures.reshape(upstream.shape[:-1])
    return upstream


def evaluate(dataset, params, classifier, grid, sampling_cfg, channels=1, batch_size=256, threads=1):
    """Fraction of correctly classified examples, with fixed sensor samples."""
    if len(dataset) == 0:
        return 0.0
    correct = 0
    for index in dataset.batches(batch_size):
        features, _, _, _ = sensor_features(dataset.images[index], grid, params, sampling_cfg, channels, threads)
        correct += int(np.sum(classifier.predict(features) == dataset.labels[index]))
    return correct / len(dataset)


def train_joint(train_set, grid, kind, train_cfg=None, sampling_cfg=None, test_set=None, threads=1,
                theta_raw=(0.0, 0.0)):
    """Optimize the layout and the classifier together.

    Args:
        train_set: Dataset used for the updates
        grid: SensorGrid
        kind: LayoutKind of the learned layout (ignored in baseline mode)
        train_cfg: TrainConfig
        sampling_cfg: SamplingConfig; its seed is used for evaluation
        test_set: Optional Dataset evaluated after every epoch
        threads: Worker threads for the sensor passes
        theta_raw: Initial unconstrained layout parameters

    Returns:
        TrainResult with the final layout, classifier and per-epoch history
    """
    train_cfg = train_cfg or TrainConfig()
    sampling_cfg = sampling_cfg or SamplingConfig()
    if len(train_set) == 0:
        raise DatasetError("training set is empty")

    kind = LayoutKind.IDENTITY if train_cfg.baseline else LayoutKind.parse(kind)
    learn_layout = kind is not LayoutKind.IDENTITY
    params = LayoutParams.from_raw(kind, theta_raw)

    classifier = MLPClassifier(input_dim(grid, train_cfg.channels), train_cfg.hidden, NUM_CLASSES,
                               seed=train_cfg.init_seed)
    optimizer = Adam(train_cfg.learning_rate, train_cfg.beta1, train_cfg.beta2, train_cfg.eps)
    shuffle = np.random.default_rng(train_cfg.shuffle_seed)
    history = []
    step = 0

    logger.info(f"Training {grid} {kind.value} layout for {train_cfg.epochs} epochs on {len(train_set)} images")
    for epoch in range(train_cfg.epochs):
        layout_frozen = not learn_layout or epoch < train_cfg.layout_freeze_epochs
        losses = []
        for index in train_set.batches(train_cfg.batch_size, shuffle):
            cfg = sampling_cfg.with_seed(step_seed(train_cfg.sensor_seed, step))
            features, image, cache, stack = sensor_features(train_set.images[index], grid, params, cfg,
                                                             train_cfg.channels, threads)
            logits, activations = classifier.forward(features)
            loss, dlogits = cross_entropy(logits, train_set.labels[index])
            grads, dfeatures = classifier.backward(activations, dlogits)

            if not layout_frozen:
                upstream = features_to_upstream(dfeatures, image, train_cfg.channels)
                record = backward(image, upstream, stack, params, cfg, cache, threads=threads)
                grads[LAYOUT_PARAM] = record.dloss_dtheta_raw

            state = dict(classifier.params)
            state[LAYOUT_PARAM] = np.array(params.theta_raw)
            optimizer.step(state, grads)
            classifier.params.update({name: state[name] for name in classifier.param_names})
            if not layout_frozen:
                params = params.with_raw(state[LAYOUT_PARAM])

            losses.append(loss)
            step += 1

        entry = {
            "epoch": epoch + 1,
            "train_loss": float(np.mean(losses)),
            "theta": list(params.theta),
            "theta_raw": list(params.theta_raw),
            "layout_frozen": layout_frozen,
        }
        if test_set is not None:
            entry["test_accuracy"] = evaluate(test_set, params, classifier, grid, sampling_cfg,
                                              train_cfg.channels, threads=threads)
        history.append(entry)
        logger.info(f"Epoch {epoch + 1}/{train_cfg.epochs}: loss={entry['train_loss']:.4f}, "
                    f"theta={entry['theta']}, accuracy={entry.get('test_accuracy')}")

    return TrainResult(params=params, classifier=classifier, history=history)


def compare_layouts(train_set, test_set, grid, kind, train_cfg=None, sampling_cfg=None, threads=1):
    """Run the uniform baseline and the learned layout under identical seeds."""
    train_cfg = train_cfg or TrainConfig()
    baseline = train_joint(train_set, grid, kind, replace(train_cfg, baseline=True), sampling_cfg,
                           test_set, threads)
    learned = train_joint(train_set, grid, kind, replace(train_cfg, baseline=False), sampling_cfg,
                          test_set, threads)
    return comparison_report(grid, kind, baseline, learned)


def comparison_report(grid, kind, baseline, learned):
    """Summarize a baseline arm and a learned arm trained under the same seeds."""
    report = {
        "grid": str(grid),
        "kind": LayoutKind.parse(kind).value,
        "baseline_accuracy": baseline.final_accuracy,
        "learned_accuracy": learned.final_accuracy,
        "learned_theta": list(learned.params.theta),
        "baseline_history": baseline.history,
        "learned_history": learned.history,
    }
    if baseline.final_accuracy is not None:
        report["margin"] = learned.final_accuracy - baseline.final_accuracy
    return report


@dataclass(frozen=True)
class Checkpoint:
    params: LayoutParams
    grid: SensorGrid
    classifier: MLPClassifier
    train_cfg: TrainConfig
    sampling_cfg: SamplingConfig
    history: Optional[list] = None


def save_checkpoint(path, checkpoint):
    """Write a checkpoint as JSON (format_version 1)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = {
        "format_version": CHECKPOINT_VERSION,
        "kind": checkpoint.params.kind.value,
        "theta_raw": list(checkpoint.params.theta_raw),
        "theta": list(checkpoint.params.theta),
        "grid": [checkpoint.grid.r1, checkpoint.grid.r2],
        "classifier": checkpoint.classifier.to_dict(),
        "train_config": checkpoint.train_cfg.to_dict(),
        "sampling_config": checkpoint.sampling_cfg.to_dict(),
        "history": checkpoint.history or [],
    }
    with open(path, "w") as f:
        json.dump(data, f, indent=2, sort_keys=True)
    logger.info(f"Checkpoint saved to {path}")
    return path


def load_checkpoint(path):
    """Read a checkpoint written by save_checkpoint.

    Raises:
        OSError: if the file cannot be read
        DatasetError: on malformed content or an unknown format version
    """
    try:
        with open(path, "r") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise DatasetError(f"{path} is not valid JSON: {e}")

    version = data.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise DatasetError(f"{path}: unsupported checkpoint format_version {version}")
    try:
        return Checkpoint(
            params=LayoutParams.from_raw(data["kind"], data["theta_raw"]),
            grid=SensorGrid(*data["grid"]),
            classifier=MLPClassifier.from_dict(data["classifier"]),
            train_cfg=TrainConfig.from_dict(data["train_config"]),
            sampling_cfg=SamplingConfig.from_dict(data["sampling_config"]),
            history=data.get("history"),
        )
    except KeyError as e:
        raise DatasetError(f"{path}: missing checkpoint field {e}")
