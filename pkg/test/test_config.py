# file: test/test_config.py
import json

import pytest

# Import helper to fix path
from test_helper import *

from src.utils.config import DEFAULT_CONFIG, Config
from src.utils.errors import ConvergenceError, DatasetError, DomainError, ImageFormatError, ToleranceError
from src.utils.parallel import chunk, parallel_map, resolve_threads


@pytest.fixture(autouse=True)
def fresh_config():
    Config.reset()
    yield
    Config.reset()


def test_config():
    config = Config()
    assert config is Config()
    sampling = config.get_sampling_config()
    assert set(sampling) == {"interior_strata", "boundary_samples", "rng_seed", "jitter", "rule"}
    assert config.get_layout_config()["kind"] in ("curvilinear", "curv")
    assert config.get_gradcheck_config()["tolerance"] > 0.0

    # Sections are copies
    sampling["interior_strata"] = 99
    assert config.get_sampling_config()["interior_strata"] != 99
    print("✓ Config loaded successfully")


def test_load_merges_with_defaults(tmp_path):
    path = tmp_path / "custom.json"
    path.write_text(json.dumps({"training": {"epochs": 3}}))
    config = Config.load(path)
    training = config.get_training_config()
    assert training["epochs"] == 3
    assert training["batch_size"] == DEFAULT_CONFIG["training"]["batch_size"]
    with pytest.raises(FileNotFoundError):
        Config.load(tmp_path / "missing.json")


def test_update_and_save(tmp_path):
    config = Config()
    config.config_dir = tmp_path
    config.config_path = tmp_path / "saved.json"
    config.update_section("runtime", {"threads": 3})
    assert config.get_runtime_config() == {"threads": 3, "log_level": DEFAULT_CONFIG["runtime"]["log_level"]}
    assert config.save()
    assert json.loads((tmp_path / "saved.json").read_text())["runtime"]["threads"] == 3
    with pytest.raises(KeyError):
        config.update_section("display", {})


def test_error_exit_codes():
    assert DomainError.exit_code == 3
    assert ToleranceError("x").exit_code == 4
    assert ImageFormatError.exit_code == 2 and DatasetError.exit_code == 2
    assert ConvergenceError.exit_code == 1
    assert isinstance(DomainError("x"), ValueError)
    assert isinstance(DatasetError("x"), OSError)


def test_parallel_helpers():
    assert resolve_threads(3) == 3
    assert resolve_threads(0) >= 1
    with pytest.raises(DomainError):
        resolve_threads(-1)
    blocks = chunk(list(range(10)), 3)
    assert [x for block in blocks for x in block] == list(range(10))
    assert len(blocks) <= 3
    assert parallel_map(lambda x: x * x, range(6), threads=4) == [0, 1, 4, 9, 16, 25]


if __name__ == "__main__":
    print("\n=== Testing sensor layout configuration ===\n")
    pytest.main([__file__, "-v"])
