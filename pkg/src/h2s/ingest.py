"""Read labeled point clouds and labeled distance matrices from disk."""

import csv
import json
import logging
from pathlib import Path

import numpy as np

from .errors import IngestError, ValidationError
from .geometry import DistanceDataset, LabeledDataset

logger = logging.getLogger(__name__)

SYMMETRY_TOLERANCE = 1e-9


def _parse_float(cell: str, path: Path, line: int) -> float:
    try:
        return float(cell)
    except ValueError:
        raise IngestError(f"non-numeric cell {cell.strip()!r}", str(path), line) from None


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def read_labeled_csv(path: str | Path) -> LabeledDataset:
    """One row per point: the class label, then N coordinates.

    A first row whose coordinate cells are all non-numeric is taken as a header.
    """
    path = Path(path)
    classes: dict[str, list[list[float]]] = {}
    width = None
    with open(path, newline="") as f:
        for line, row in enumerate(csv.reader(f), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if line == 1 and len(row) > 1 and not any(_is_number(cell) for cell in row[1:]):
                logger.debug(f"Skipping header row in {path}")
                continue
            if len(row) < 2:
                raise IngestError("row needs a label and at least one coordinate", str(path), line)
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise IngestError(f"expected {width} columns, got {len(row)}", str(path), line)
            label = row[0].strip()
            if not label:
                raise IngestError("empty class label", str(path), line)
            classes.setdefault(label, []).append([_parse_float(cell, path, line) for cell in row[1:]])

    if not classes:
        raise IngestError("no data rows", str(path))
    logger.info(f"Read {sum(len(v) for v in classes.values())} points in {len(classes)} classes from {path}")
    return LabeledDataset.from_mapping({label: np.array(rows) for label, rows in classes.items()})


def _symmetrized(D: np.ndarray, source: str) -> np.ndarray:
    """Accept near-symmetric matrices (relative asymmetry up to 1e-9) by averaging with the transpose."""
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise IngestError(f"distance matrix must be square, got shape {D.shape}", source)
    scale = float(np.max(np.abs(D))) if D.size else 0.0
    asymmetry = float(np.max(np.abs(D - D.T))) if D.size else 0.0
    if asymmetry > SYMMETRY_TOLERANCE * max(scale, 1e-300):
        raise IngestError(f"distance matrix is asymmetric (max |D - D^T| = {asymmetry:.3g})", source)
    if asymmetry > 0:
        logger.warning(f"Symmetrizing distance matrix from {source} (max |D - D^T| = {asymmetry:.3g})")
        D = 0.5 * (D + D.T)
    diagonal = float(np.max(np.abs(np.diag(D)))) if D.size else 0.0
    if diagonal > SYMMETRY_TOLERANCE * max(scale, 1e-300):
        raise IngestError(f"distance matrix has a nonzero diagonal (max {diagonal:.3g})", source)
    D = D.copy()
    np.fill_diagonal(D, 0.0)
    return D


def read_distance_csv(path: str | Path, labels_path: str | Path, dimension: int) -> DistanceDataset:
    """Square distance matrix CSV plus a label file with one label per line."""
    path = Path(path)
    labels_path = Path(labels_path)
    rows = []
    with open(path, newline="") as f:
        for line, row in enumerate(csv.reader(f), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if rows and len(row) != len(rows[0]):
                raise IngestError(f"expected {len(rows[0])} columns, got {len(row)}", str(path), line)
            rows.append([_parse_float(cell, path, line) for cell in row])
    if not rows:
        raise IngestError("no data rows", str(path))

    with open(labels_path) as f:
        labels = [line.strip().split(",")[0].strip() for line in f if line.strip()]
    D = _symmetrized(np.array(rows), str(path))
    if len(labels) != D.shape[0]:
        raise IngestError(f"{len(labels)} labels for a {D.shape[0]} x {D.shape[0]} matrix", str(labels_path))
    logger.info(f"Read {D.shape[0]} x {D.shape[0]} distance matrix with {len(set(labels))} classes from {path}")
    return DistanceDataset(tuple(labels), D, dimension)


def read_json_dataset(path: str | Path, dimension: int | None = None) -> LabeledDataset | DistanceDataset:
    """JSON dataset: ``{"classes": {label: [[x, ...], ...]}}`` or
    ``{"labels": [...], "distances": [[...]], "dimension": N}``.
    """
    path = Path(path)
    try:
        with open(path) as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise IngestError(f"invalid JSON: {e.msg}", str(path), e.lineno) from e
    if not isinstance(data, dict):
        raise IngestError("top level must be an object", str(path))

    if "classes" in data:
        classes = data["classes"]
        if not isinstance(classes, dict) or not classes:
            raise IngestError("'classes' must map labels to point lists", str(path))
        try:
            arrays = {str(label): np.asarray(points, dtype=float) for label, points in classes.items()}
        except (TypeError, ValueError) as e:
            raise IngestError(f"malformed point list: {e}", str(path)) from e
        return LabeledDataset.from_mapping(arrays)

    if "distances" in data:
        N = data.get("dimension", dimension)
        if N is None:
            raise IngestError("distance dataset needs 'dimension'", str(path))
        try:
            D = np.asarray(data["distances"], dtype=float)
        except (TypeError, ValueError) as e:
            raise IngestError(f"malformed distance matrix: {e}", str(path)) from e
        return DistanceDataset(tuple(data.get("labels", ())), _symmetrized(D, str(path)), int(N))

    raise IngestError("expected a 'classes' or 'distances' key", str(path))


def ingest(
    path: str | Path,
    format: str = "csv",
    labels_path: str | Path | None = None,
    dimension: int | None = None,
) -> LabeledDataset | DistanceDataset:
    """Load a dataset in one of the supported formats: csv, json or distance."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"input not found: {path}")
    if format == "csv":
        return read_labeled_csv(path)
    if format == "json":
        return read_json_dataset(path, dimension)
    if format == "distance":
        if labels_path is None or dimension is None:
            raise ValidationError("distance input needs a label file and the ambient dimension")
        return read_distance_csv(path, labels_path, dimension)
    raise ValidationError(f"unknown input format {format!r}")


def write_labeled_csv(dataset: LabeledDataset, path: str | Path):
    """Inverse of read_labeled_csv, with a header row."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["label", *(f"x{k}" for k in range(dataset.dimension))])
        for label, points in zip(dataset.labels, dataset.points):
            for point in points:
                writer.writerow([label, *(repr(float(v)) for v in point)])
