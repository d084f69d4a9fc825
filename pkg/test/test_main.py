# file: test/test_main.py
import json
import logging

import numpy as np
import pytest

# Import helper to fix path
from test_helper import *

from src.main import load_manifest, main, parse_args
from src.radiance.image_io import load_image
from src.utils.config import Config
from src.utils.errors import DomainError

FAST = ["--strata", "2", "--boundary-samples", "4"]


@pytest.fixture(autouse=True)
def fresh_config():
    Config.reset()
    yield
    Config.reset()


def read_json(path):
    with open(path, "r") as f:
        return json.load(f)


def test_parse_simulate_arguments():
    config = parse_args(["simulate", "--field", "blob", "--grid", "8x6", "--kind", "rect",
                         "--theta", "0.5,0.3", "--threads", "2", "--seed", "7", "-v"])
    assert config.command == "simulate"
    assert config.threads == 2
    assert config.log_level == logging.DEBUG
    layout = config.options["layout"]
    assert layout["grid"] == "8x6" and layout["kind"] == "rectangular"
    np.testing.assert_allclose(np.tanh(layout["theta_raw"]), [0.5, 0.3])
    assert config.options["sampling"]["rng_seed"] == 7
    assert config.options["sampling"]["rule"] == "gauss"
    quadrature = parse_args(["simulate", "--field", "blob", "--no-jitter", "--rule", "midpoint"])
    assert quadrature.options["sampling"]["jitter"] is False
    assert quadrature.options["sampling"]["rule"] == "midpoint"
    print("✓ simulate arguments parsed")


def test_common_flags_before_the_subcommand():
    config = parse_args(["--threads", "3", "--output-dir", "elsewhere", "layout-svg"])
    assert config.threads == 3
    assert str(config.output_dir) == "elsewhere"
    assert config.options["layout"]["theta_raw"] == [0.0, 0.0]


def test_invalid_arguments():
    with pytest.raises(DomainError):
        parse_args(["simulate", "--field", "blob", "--theta", "1.5,0"])
    with pytest.raises(DomainError):
        parse_args(["train", "--epochs", "1"])
    with pytest.raises(DomainError):
        parse_args(["backwarp", "--input", "x.ppm", "--target", "8by8"])
    with pytest.raises(SystemExit) as info:
        parse_args(["simulate", "--field", "blob", "--frobnicate"])
    assert info.value.code == 2
    assert main(["simulate", "--field", "blob", "--theta", "1.5,0"]) == 3


def test_config_file_sets_defaults(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"layout": {"kind": "rect", "r1": 6, "r2": 2},
                                "sampling": {"interior_strata": 3}}))
    config = parse_args(["simulate", "--field", "ramp", "--config", str(path)])
    assert config.options["layout"]["grid"] == "6x2"
    assert config.options["layout"]["kind"] == "rectangular"
    assert config.options["sampling"]["interior_strata"] == 3
    assert config.options["sampling"]["boundary_samples"] == 32


def test_simulate_writes_outputs(tmp_path):
    code = main(["simulate", "--field", "constant:0.2,0.4,0.6", "--grid", "4x3", "--kind", "curv",
                 "--theta", "0.5,0.5", "--output-dir", str(tmp_path)])
    assert code == 0
    report = read_json(tmp_path / "sensor.json")
    np.testing.assert_array_equal(np.array(report["pixels"])[..., 1], 0.4)
    assert report["volumes_sum"] == pytest.approx(4.0, rel=1e-2)
    assert load_image(tmp_path / "sensor.ppm").pixels.shape == (3, 4, 3)
    assert load_manifest(tmp_path / "manifest.json")["command"] == "simulate"


def test_missing_image_is_an_io_error(tmp_path):
    assert main(["simulate", "--image", str(tmp_path / "missing.png"), "--output-dir", str(tmp_path)]) == 2


def test_gradcheck_exit_codes(tmp_path):
    constant = tmp_path / "constant"
    assert main(["gradcheck", "--field", "constant:0.3,0.3,0.3", "--grid", "3x3", "--theta", "0.3,0.2",
                 "--output-dir", str(constant)]) == 0
    report = read_json(constant / "gradcheck.json")
    assert report["analytic"] == [0.0, 0.0] and report["passed"]

    broken = tmp_path / "broken"
    assert main(["gradcheck", "--field", "blob", "--grid", "4x4", "--kind", "rect", "--theta", "0.3,0.2",
                 "--fd-step", "10", "--output-dir", str(broken)]) == 4
    assert read_json(broken / "gradcheck.json")["passed"] is False


def test_simulate_then_backwarp(tmp_path):
    sensor_dir, warp_dir = tmp_path / "sensor", tmp_path / "warp"
    assert main(["simulate", "--field", "ramp", "--grid", "4x2", "--kind", "identity",
                 "--output-dir", str(sensor_dir)]) == 0
    assert main(["backwarp", "--input", str(sensor_dir / "sensor.ppm"), "--target", "8x4", "--kind", "identity",
                 "--output-dir", str(warp_dir)]) == 0
    sensor = load_image(sensor_dir / "sensor.ppm").pixels
    warped = load_image(warp_dir / "backwarp.ppm").pixels
    np.testing.assert_array_equal(warped, np.repeat(np.repeat(sensor, 2, axis=0), 2, axis=1))

    assert main(["backwarp", "--input", str(sensor_dir / "sensor.ppm"), "--target", "2x2",
                 "--output-dir", str(warp_dir)]) == 3


def test_replay_is_byte_identical_across_threads(tmp_path):
    first, second = tmp_path / "first", tmp_path / "second"
    assert main(["simulate", "--field", "blob:0.2,-0.1,0.4", "--grid", "5x4", "--kind", "curv",
                 "--theta", "0.4,-0.3", "--seed", "11", "--threads", "1", "--output-dir", str(first)]) == 0
    assert main(["--replay", str(first / "manifest.json"), "--threads", "4", "--output-dir", str(second)]) == 0
    for name in ("manifest.json", "sensor.json", "sensor.ppm"):
        assert (first / name).read_bytes() == (second / name).read_bytes()
    print("✓ Replay reproduces every output byte for byte")


def assert_replay_matches(tmp_path, command, outputs):
    first, second = tmp_path / "first", tmp_path / "second"
    assert main(command + ["--threads", "1", "--output-dir", str(first)]) == 0
    assert main(["--replay", str(first / "manifest.json"), "--threads", "3", "--output-dir", str(second)]) == 0
    for name in ("manifest.json",) + outputs:
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_gradcheck_replay_is_byte_identical_across_threads(tmp_path):
    assert_replay_matches(tmp_path, ["gradcheck", "--field", "checker:1", "--grid", "4x3", "--kind", "rect",
                                     "--theta", "0.3,0.2", "--no-jitter"], ("gradcheck.json",))


def test_backwarp_replay_is_byte_identical_across_threads(tmp_path):
    source = tmp_path / "source"
    assert main(["simulate", "--field", "ramp", "--grid", "4x4", "--output-dir", str(source)]) == 0
    assert_replay_matches(tmp_path, ["backwarp", "--input", str(source / "sensor.ppm"), "--target", "32x32",
                                     "--kind", "curv", "--theta", "0.5,0.4"], ("backwarp.ppm",))


def test_bad_manifest(tmp_path):
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps({"format_version": 9, "command": "simulate", "options": {}}))
    assert main(["--replay", str(path)]) == 3


def test_layout_svg_command(tmp_path):
    assert main(["layout-svg", "--grid", "6x6", "--kind", "curv", "--theta", "0.56,0.38", "--density", "8",
                 "--output-dir", str(tmp_path)]) == 0
    assert "<svg" in (tmp_path / "layout.svg").read_text()
    assert read_json(tmp_path / "layout.json")["kind"] == "curvilinear"


def test_train_then_eval(tmp_path):
    train_dir, eval_dir = tmp_path / "train", tmp_path / "eval"
    assert main(["train", "--synthetic", "20", "--grid", "4x4", "--kind", "rect", "--epochs", "2",
                 "--batch-size", "10", "--compare", "--output-dir", str(train_dir)] + FAST) == 0
    metrics = read_json(train_dir / "metrics.json")
    assert len(metrics["history"]) == 2
    assert 0.0 <= metrics["final_accuracy"] <= 1.0
    assert "margin" in metrics["comparison"]
    assert (train_dir / "layout.svg").exists()

    assert main(["eval", "--checkpoint", str(train_dir / "checkpoint.json"), "--synthetic", "20",
                 "--output-dir", str(eval_dir)]) == 0
    evaluation = read_json(eval_dir / "eval.json")
    assert evaluation["accuracy"] == pytest.approx(metrics["final_accuracy"])
    assert evaluation["examples"] == 4


def test_train_with_frozen_layout(tmp_path):
    assert main(["train", "--synthetic", "10", "--grid", "3x3", "--epochs", "1", "--batch-size", "5",
                 "--freeze-layout-epochs", "999", "--output-dir", str(tmp_path)] + FAST) == 0
    metrics = read_json(tmp_path / "metrics.json")
    assert metrics["layout"]["theta_raw"] == [0.0, 0.0]
    assert metrics["history"][0]["layout_frozen"] is True


def test_eval_with_broken_checkpoint(tmp_path):
    path = tmp_path / "checkpoint.json"
    path.write_text("{ not json")
    assert main(["eval", "--checkpoint", str(path), "--synthetic", "5", "--output-dir", str(tmp_path)]) == 2


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
