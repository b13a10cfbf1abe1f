"""JSON artifact persistence shared by the pipeline stages."""

import json
import logging
from pathlib import Path

import numpy as np

from .errors import ValidationError

logger = logging.getLogger(__name__)

MODEL = "model.json"
EMBEDDING = "embedding.json"
INFERENCE = "inference.json"
SCENE_SVG = "scene.svg"
SCENE_JSON = "scene.json"
DIAGRAMS = "diagrams"
MANIFEST = "run.json"

# stage that produces each artifact, for "run X first" messages
PRODUCERS = {
    MODEL: "fit",
    EMBEDDING: "embed",
    INFERENCE: "infer",
}


def _to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _to_jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return _to_jsonable(obj.item())
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def dumps(payload: dict) -> str:
    """Canonical JSON text: sorted keys, two-space indent, trailing newline."""
    return json.dumps(_to_jsonable(payload), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_artifact(path: str | Path, stage: str, config_hash: str, payload: dict) -> Path:
    """Write ``payload`` tagged with its stage and config hash."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    document = dict(payload)
    document["stage"] = stage
    document["config_hash"] = config_hash
    path.write_text(dumps(document))
    logger.info(f"Wrote {path}")
    return path


def read_artifact(path: str | Path) -> dict:
    """Load an upstream artifact, naming the stage that produces it when missing."""
    path = Path(path)
    if not path.exists():
        producer = PRODUCERS.get(path.name)
        hint = f"; run `h2s {producer}` first" if producer else ""
        raise ValidationError(f"missing upstream artifact {path}{hint}")
    try:
        with open(path) as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise ValidationError(f"corrupt artifact {path}: {e}") from e


def is_current(path: str | Path, config_hash: str) -> bool:
    """True when ``path`` exists and was written under ``config_hash``."""
    path = Path(path)
    if not path.exists():
        return False
    try:
        with open(path) as f:
            return json.load(f).get("config_hash") == config_hash
    except (json.JSONDecodeError, OSError, AttributeError):
        return False


class StagedWrites:
    """Tracks files written by a stage so a failure can remove them.

    Usage::

        with StagedWrites() as staged:
            staged.add(write_artifact(...))
    """

    def __init__(self):
        self.paths: list[Path] = []

    def add(self, path: str | Path) -> Path:
        path = Path(path)
        self.paths.append(path)
        return path

    def write_text(self, path: str | Path, text: str) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        logger.info(f"Wrote {path}")
        return self.add(path)

    def __enter__(self) -> "StagedWrites":
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None:
            ok, message = remove_artifacts(self.paths)
            if ok:
                logger.info(message)
            else:
                logger.error(message)
        return False


def remove_artifacts(paths: list[Path]) -> tuple[bool, str]:
    """
    Delete partially written artifacts.

    Returns:
        Tuple of (success, message)
    """
    removed = 0
    try:
        for path in paths:
            if path.exists():
                path.unlink()
                removed += 1
        return True, f"Removed {removed} partial artifact(s)"
    except OSError as e:
        return False, f"Failed to remove partial artifacts: {e}"
