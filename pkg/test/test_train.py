# file: test/test_train.py
import gzip
import json

import numpy as np
import pytest
from scipy import ndimage

# Import helper to fix path
from test_helper import *

from src.grad.backward import backward
from src.grad.gradcheck import finite_difference_gradient, norm_relative_error
from src.layout.deformation import LayoutKind, LayoutParams
from src.layout.grid import SensorGrid
from src.sensor.sampling import SamplingConfig
from src.train.classifier import MLPClassifier, cross_entropy
from src.train.dataset import (IMAGES_MAGIC, LABELS_MAGIC, Dataset, load_mnist, read_idx, synthetic_digits,
                               write_idx)
from src.train.optimizer import Adam
from src.train.trainer import (Checkpoint, TrainConfig, compare_layouts, evaluate, features_to_upstream,
                               load_checkpoint, save_checkpoint, sensor_features, step_seed, train_joint)
from src.utils.errors import DatasetError, DomainError

GRID = SensorGrid(5, 5)
FAST_SAMPLING = SamplingConfig(interior_strata=4, boundary_samples=8)


def small_config(**overrides):
    values = dict(epochs=2, batch_size=10, hidden=(16,), learning_rate=0.01)
    values.update(overrides)
    return TrainConfig(**values)


def test_cross_entropy_uniform_logits():
    loss, grad = cross_entropy(np.zeros((4, 10)), np.array([0, 3, 5, 9]))
    assert loss == pytest.approx(np.log(10.0))
    np.testing.assert_allclose(grad.sum(axis=1), 0.0, atol=1e-15)
    with pytest.raises(DomainError):
        cross_entropy(np.array([[np.inf] + [0.0] * 9]), np.array([0]))
    print("✓ Uniform logits give ln 10")


def test_cross_entropy_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    logits = rng.normal(size=(3, 10))
    labels = np.array([1, 4, 7])
    _, grad = cross_entropy(logits, labels)
    numeric = finite_difference_gradient(lambda x: cross_entropy(x.reshape(3, 10), labels)[0], logits.ravel(), 1e-6)
    np.testing.assert_allclose(grad.ravel(), numeric, atol=1e-8)


def test_classifier_backward_matches_finite_differences():
    rng = np.random.default_rng(1)
    model = MLPClassifier(6, hidden=(5, 4), classes=10, seed=2)
    x = rng.normal(size=(4, 6))
    labels = np.array([0, 2, 9, 5])

    def loss_of_params(flat):
        saved = model.get_flat()
        model.set_flat(flat)
        loss = cross_entropy(model.forward(x)[0], labels)[0]
        model.set_flat(saved)
        return loss

    logits, cache = model.forward(x)
    _, dlogits = cross_entropy(logits, labels)
    grads, dx = model.backward(cache, dlogits)
    analytic = np.concatenate([grads[name].ravel() for name in model.param_names])
    numeric = finite_difference_gradient(loss_of_params, model.get_flat(), 1e-6)
    np.testing.assert_allclose(analytic, numeric, atol=1e-6)

    numeric_dx = finite_difference_gradient(
        lambda flat: cross_entropy(model.forward(flat.reshape(4, 6))[0], labels)[0], x.ravel(), 1e-6)
    np.testing.assert_allclose(dx.ravel(), numeric_dx, atol=1e-6)


def test_set_flat_rejects_wrong_sizes_without_touching_parameters():
    model = MLPClassifier(8, hidden=(4,), seed=3)
    before = model.get_flat()
    for bad in (before[:-1], np.concatenate([before, [0.0]]), np.zeros(3), before.reshape(1, -1)):
        with pytest.raises(DomainError):
            model.set_flat(bad)
        np.testing.assert_array_equal(model.get_flat(), before)
    model.set_flat(before + 1.0)
    np.testing.assert_array_equal(model.get_flat(), before + 1.0)


def test_classifier_serialization():
    model = MLPClassifier(8, hidden=(4,), seed=3)
    clone = MLPClassifier.from_dict(json.loads(json.dumps(model.to_dict())))
    np.testing.assert_array_equal(clone.get_flat(), model.get_flat())
    with pytest.raises(DomainError):
        model.forward(np.zeros((2, 7)))
    with pytest.raises(DomainError):
        model.set_flat(np.zeros(3))


def test_adam_updates_only_given_parameters():
    params = {"a": np.array([1.0, -1.0]), "b": np.array([0.5])}
    optimizer = Adam(learning_rate=0.1)
    optimizer.step(params, {"a": np.array([2.0, -3.0])})
    # First Adam step moves each component by learning_rate against the gradient sign
    np.testing.assert_allclose(params["a"], [0.9, -0.9], atol=1e-6)
    assert params["b"][0] == 0.5
    assert "b" not in optimizer.m
    with pytest.raises(DomainError):
        Adam(learning_rate=0.0)


def test_idx_roundtrip_and_errors(tmp_path):
    images = np.random.default_rng(4).integers(0, 256, size=(3, 4, 5))
    labels = np.array([1, 0, 9])
    write_idx(tmp_path / "images.idx", images, IMAGES_MAGIC)
    write_idx(tmp_path / "labels.idx", labels, LABELS_MAGIC)
    np.testing.assert_array_equal(read_idx(tmp_path / "images.idx", IMAGES_MAGIC), images)

    data = load_mnist(tmp_path / "images.idx", tmp_path / "labels.idx", split="test")
    assert len(data) == 3 and data.split == "test"
    np.testing.assert_allclose(data.images, images / 255.0)

    with gzip.open(tmp_path / "labels.idx.gz", "wb") as f:
        f.write((tmp_path / "labels.idx").read_bytes())
    np.testing.assert_array_equal(read_idx(tmp_path / "labels.idx.gz", LABELS_MAGIC), labels)

    with pytest.raises(DatasetError):
        read_idx(tmp_path / "images.idx", LABELS_MAGIC)

    truncated = tmp_path / "truncated.idx"
    truncated.write_bytes((tmp_path / "images.idx").read_bytes()[:-5])
    with pytest.raises(DatasetError):
        read_idx(truncated, IMAGES_MAGIC)

    write_idx(tmp_path / "bad_labels.idx", np.array([1, 10, 2]), LABELS_MAGIC)
    with pytest.raises(DatasetError):
        load_mnist(tmp_path / "images.idx", tmp_path / "bad_labels.idx")

    with pytest.raises(OSError):
        read_idx(tmp_path / "missing.idx", IMAGES_MAGIC)


def test_dataset_validation_and_batches():
    with pytest.raises(DatasetError):
        Dataset(np.zeros((2, 4, 4)), np.array([0]))
    with pytest.raises(DatasetError):
        Dataset(np.full((1, 4, 4), 2.0), np.array([0]))
    data = synthetic_digits(25, seed=1)
    assert data.images.shape == (25, 28, 28)
    assert data.images.min() >= 0.0 and data.images.max() <= 1.0
    assert len(data.subset(10)) == 10
    batches = list(data.batches(10, np.random.default_rng(0)))
    assert [len(b) for b in batches] == [10, 10, 5]
    assert sorted(np.concatenate(batches).tolist()) == list(range(25))


def test_step_seeds_are_distinct_and_reproducible():
    assert step_seed(0, 5) == step_seed(0, 5)
    assert len({step_seed(0, step) for step in range(100)}) == 100
    assert step_seed(0, 1) != step_seed(1, 1)


def test_frozen_layout_stays_exactly_at_its_start():
    data = synthetic_digits(20, seed=2)
    result = train_joint(data, GRID, "curv", small_config(layout_freeze_epochs=999), FAST_SAMPLING)
    assert result.params.theta_raw == (0.0, 0.0)
    assert all(entry["layout_frozen"] for entry in result.history)


def test_frozen_curvilinear_matches_uniform_baseline():
    train, test = synthetic_digits(20, seed=3), synthetic_digits(10, seed=4, split="test")
    baseline = train_joint(train, GRID, "curv", small_config(baseline=True), FAST_SAMPLING, test)
    frozen = train_joint(train, GRID, "curv", small_config(layout_freeze_epochs=999), FAST_SAMPLING, test)
    assert baseline.params.kind is LayoutKind.IDENTITY
    np.testing.assert_array_equal(baseline.classifier.get_flat(), frozen.classifier.get_flat())
    assert [h["test_accuracy"] for h in baseline.history] == [h["test_accuracy"] for h in frozen.history]


def test_layout_moves_after_the_freeze():
    data = synthetic_digits(20, seed=5)
    result = train_joint(data, GRID, "rect", small_config(epochs=3, layout_freeze_epochs=1), FAST_SAMPLING)
    frozen, moving = result.history[0], result.history[-1]
    assert frozen["layout_frozen"] and frozen["theta_raw"] == [0.0, 0.0]
    assert not moving["layout_frozen"]
    assert moving["theta_raw"] != [0.0, 0.0]


def test_training_is_deterministic():
    data = synthetic_digits(20, seed=6)
    first = train_joint(data, GRID, "curv", small_config(), FAST_SAMPLING, threads=1)
    second = train_joint(data, GRID, "curv", small_config(), FAST_SAMPLING, threads=3)
    assert first.params.theta_raw == second.params.theta_raw
    np.testing.assert_array_equal(first.classifier.get_flat(), second.classifier.get_flat())
    assert first.history == second.history


def test_classifier_can_overfit_a_small_set():
    data = synthetic_digits(40, seed=7)
    grid = SensorGrid(7, 7)
    cfg = TrainConfig(epochs=30, batch_size=10, hidden=(64,), learning_rate=0.01, baseline=True)
    result = train_joint(data, grid, "identity", cfg, FAST_SAMPLING)
    assert result.history[-1]["train_loss"] < result.history[0]["train_loss"]
    assert evaluate(data, result.params, result.classifier, grid, FAST_SAMPLING) >= 0.75


def test_constant_classifier_accuracy_is_modal_frequency():
    data = synthetic_digits(30, seed=8)
    model = MLPClassifier(GRID.r1 * GRID.r2, hidden=(4,), seed=0)
    model.set_flat(np.zeros_like(model.get_flat()))
    modal = int(np.bincount(data.labels, minlength=10).argmax())
    model.params["b1"][modal] = 1.0
    accuracy = evaluate(data, LayoutParams.identity(), model, GRID, FAST_SAMPLING)
    assert accuracy == pytest.approx(np.mean(data.labels == modal))


@pytest.mark.parametrize("kind", ["rect", "curv"])
def test_end_to_end_layout_gradient_matches_finite_differences(kind):
    # Smoothed digits under a C2 spline keep the loss smooth in theta
    data = synthetic_digits(6, seed=9)
    images = np.clip(ndimage.gaussian_filter(data.images, sigma=(0, 1.5, 1.5)), 0.0, 1.0)
    grid = SensorGrid(4, 4)
    cfg = SamplingConfig(jitter=False).refined(4)
    model = MLPClassifier(16, hidden=(8,), seed=1)
    params = LayoutParams.from_theta(kind, (0.3, 0.2))

    features, image, cache, stack = sensor_features(images, grid, params, cfg, interpolation="cubic")
    logits, activations = model.forward(features)
    _, dlogits = cross_entropy(logits, data.labels)
    _, dfeatures = model.backward(activations, dlogits)
    record = backward(image, features_to_upstream(dfeatures, image), stack, params, cfg, cache)

    def loss(theta_raw):
        x, _, _, _ = sensor_features(images, grid, params.with_raw(theta_raw), cfg, interpolation="cubic")
        return cross_entropy(model.forward(x)[0], data.labels)[0]

    numeric = finite_difference_gradient(loss, np.array(params.theta_raw), 1e-4)
    assert norm_relative_error(record.dloss_dtheta_raw, numeric) < 1e-2


def test_seed_summary_checks_theta_signs():
    from run_mnist_comparison import parse_seeds, summarize

    assert parse_seeds("0, 1,2") == [0, 1, 2]
    with pytest.raises(DomainError):
        parse_seeds("a,b")
    runs = [
        {"seed": 0, "grid": "4x4", "kind": "curvilinear", "baseline_accuracy": 0.5, "learned_accuracy": 0.7,
         "learned_theta": [0.2, 0.1]},
        {"seed": 1, "grid": "4x4", "kind": "curvilinear", "baseline_accuracy": 0.6, "learned_accuracy": 0.7,
         "learned_theta": [0.3, 0.4]},
        {"seed": 0, "grid": "4x4", "kind": "rectangular", "baseline_accuracy": 0.5, "learned_accuracy": 0.4,
         "learned_theta": [0.2, -0.1]},
    ]
    curv, rect = summarize(runs)
    assert curv["seeds"] == [0, 1] and curv["theta_positive"]
    assert curv["mean_margin"] == pytest.approx(0.15)
    assert rect["theta_positive"] is False


def test_comparison_arms_share_seeds():
    train, test = synthetic_digits(20, seed=12), synthetic_digits(10, seed=13, split="test")
    report = compare_layouts(train, test, GRID, "curv", small_config(epochs=1), FAST_SAMPLING)
    assert report["kind"] == "curvilinear" and report["grid"] == "5x5"
    assert report["margin"] == pytest.approx(report["learned_accuracy"] - report["baseline_accuracy"])
    assert len(report["learned_theta"]) == 2


def test_checkpoint_roundtrip(tmp_path):
    data = synthetic_digits(10, seed=10)
    result = train_joint(data, GRID, "curv", small_config(epochs=1), FAST_SAMPLING)
    checkpoint = Checkpoint(params=result.params, grid=GRID, classifier=result.classifier,
                            train_cfg=small_config(epochs=1), sampling_cfg=FAST_SAMPLING, history=result.history)
    path = save_checkpoint(tmp_path / "checkpoint.json", checkpoint)
    loaded = load_checkpoint(path)
    assert loaded.params.theta_raw == result.params.theta_raw
    assert loaded.grid == GRID
    assert loaded.train_cfg == small_config(epochs=1)
    np.testing.assert_array_equal(loaded.classifier.get_flat(), result.classifier.get_flat())

    data = json.loads(path.read_text())
    data["format_version"] = 2
    (tmp_path / "future.json").write_text(json.dumps(data))
    with pytest.raises(DatasetError):
        load_checkpoint(tmp_path / "future.json")


def test_train_config_validation():
    with pytest.raises(DomainError):
        TrainConfig(epochs=0)
    with pytest.raises(DomainError):
        TrainConfig(channels=2)
    cfg = TrainConfig.from_dict({"epochs": 3, "unknown": 1}, batch_size=8, learning_rate=None)
    assert (cfg.epochs, cfg.batch_size, cfg.learning_rate) == (3, 8, 0.01)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
