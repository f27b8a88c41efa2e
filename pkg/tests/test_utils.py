"""
Testing for Utility module
"""

import pytest

from fastvg.common import DataError, ParameterError
from fastvg.utils import LOCK_NAME, RunPaths, artifact_lock, derive_seed, numpy_rng, parse_grid, require_file


def test_derive_seed():
    assert derive_seed(0, "teacher") == derive_seed(0, "teacher")
    assert derive_seed(0, "teacher") != derive_seed(0, "distill")
    assert derive_seed(0, "teacher") != derive_seed(1, "teacher")
    assert derive_seed(0, "a", 1) != derive_seed(0, "a", 2)
    assert 0 <= derive_seed(123, "x") < 2**31
    assert numpy_rng(0, "a").random() == numpy_rng(0, "a").random()


def test_parse_grid():
    grid = parse_grid("50:1000:50")
    assert len(grid) == 20
    assert grid[0] == 50
    assert grid[-1] == 1000
    assert parse_grid("1, 6,30") == [1, 6, 30]
    for bad in ("", "1:2", "10:1:1", "1:10:0"):
        with pytest.raises(ParameterError):
            parse_grid(bad)


def test_run_paths(tmp_path):
    paths = RunPaths(tmp_path / "run")
    for name in RunPaths.STAGES:
        assert getattr(paths, name).is_dir()
    with pytest.raises(ParameterError):
        paths.stage("elsewhere")


def test_artifact_lock(tmp_path):
    with artifact_lock(tmp_path) as lock:
        assert lock.name == LOCK_NAME
        assert lock.is_file()
        with pytest.raises(DataError, match="locked"):
            with artifact_lock(tmp_path):
                pass
    assert not (tmp_path / LOCK_NAME).exists()


def test_lock_released_on_error(tmp_path):
    with pytest.raises(RuntimeError):
        with artifact_lock(tmp_path):
            raise RuntimeError("boom")
    assert not (tmp_path / LOCK_NAME).exists()


def test_require_file(tmp_path):
    (tmp_path / "a").write_text("x")
    assert require_file(tmp_path / "a") == tmp_path / "a"
    with pytest.raises(DataError, match="teacher checkpoint"):
        require_file(tmp_path / "b", "teacher checkpoint")
