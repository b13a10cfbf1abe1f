import json

import numpy as np
import pytest

from h2s.artifacts import MODEL, StagedWrites, dumps, is_current, read_artifact, remove_artifacts, write_artifact
from h2s.errors import ValidationError


def test_dumps_is_canonical() -> None:
    text = dumps({"b": np.array([1.0, 2.0]), "a": np.float64(0.5), "c": float("nan")})
    assert text == '{\n  "a": 0.5,\n  "b": [\n    1.0,\n    2.0\n  ],\n  "c": null\n}\n'


def test_write_and_read(tmp_path) -> None:
    path = write_artifact(tmp_path / MODEL, "fit", "abc", {"stats": {"radii": [1.0]}})
    data = read_artifact(path)
    assert data["stage"] == "fit"
    assert data["config_hash"] == "abc"
    assert data["stats"] == {"radii": [1.0]}


def test_missing_artifact_names_producer(tmp_path) -> None:
    with pytest.raises(ValidationError, match="run `h2s fit` first"):
        read_artifact(tmp_path / MODEL)


def test_corrupt_artifact(tmp_path) -> None:
    (tmp_path / MODEL).write_text("{not json")
    with pytest.raises(ValidationError, match="corrupt"):
        read_artifact(tmp_path / MODEL)


def test_is_current(tmp_path) -> None:
    path = write_artifact(tmp_path / "x.json", "fit", "h1", {})
    assert is_current(path, "h1")
    assert not is_current(path, "h2")
    assert not is_current(tmp_path / "missing.json", "h1")
    (tmp_path / "list.json").write_text(json.dumps([1, 2]))
    assert not is_current(tmp_path / "list.json", "h1")


def test_staged_writes_removed_on_failure(tmp_path) -> None:
    with pytest.raises(RuntimeError):
        with StagedWrites() as staged:
            staged.write_text(tmp_path / "diagrams" / "a.svg", "<svg/>")
            staged.add(write_artifact(tmp_path / "b.json", "render", "h", {}))
            raise RuntimeError("boom")
    assert not (tmp_path / "diagrams" / "a.svg").exists()
    assert not (tmp_path / "b.json").exists()


def test_staged_writes_kept_on_success(tmp_path) -> None:
    with StagedWrites() as staged:
        staged.write_text(tmp_path / "a.svg", "<svg/>")
    assert (tmp_path / "a.svg").read_text() == "<svg/>"


def test_remove_artifacts_reports_count(tmp_path) -> None:
    (tmp_path / "a").write_text("x")
    ok, message = remove_artifacts([tmp_path / "a", tmp_path / "never"])
    assert ok
    assert message == "Removed 1 partial artifact(s)"
