"""Core domain types and hypersphere summary statistics."""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .errors import ValidationError

logger = logging.getLogger(__name__)


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class LabeledDataset:
    """Per-class point clouds sharing one ambient dimension N."""

    labels: tuple[str, ...]
    points: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.labels) != len(self.points):
            raise ValidationError("labels and point sets differ in length")
        if len(self.labels) == 0:
            raise ValidationError("dataset has no classes")
        if len(set(self.labels)) != len(self.labels):
            raise ValidationError(f"duplicate class labels: {list(self.labels)}")

        frozen = []
        dims = set()
        for label, pts in zip(self.labels, self.points):
            pts = np.asarray(pts, dtype=float)
            if pts.ndim == 1:
                pts = pts[:, None]
            if pts.ndim != 2:
                raise ValidationError(f"class {label!r}: points must be a P x N matrix")
            if pts.shape[0] < 2:
                raise ValidationError(f"class {label!r}: needs at least 2 points, got {pts.shape[0]}")
            if not np.all(np.isfinite(pts)):
                raise ValidationError(f"class {label!r}: non-finite coordinates")
            dims.add(pts.shape[1])
            frozen.append(_frozen(pts))

        if len(dims) != 1:
            raise ValidationError(f"classes disagree on dimension: {sorted(dims)}")

        object.__setattr__(self, "labels", tuple(str(label) for label in self.labels))
        object.__setattr__(self, "points", tuple(frozen))

    @classmethod
    def from_mapping(cls, classes: dict[str, np.ndarray]) -> "LabeledDataset":
        return cls(tuple(classes), tuple(classes.values()))

    @property
    def dimension(self) -> int:
        return self.points[0].shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.labels)

    def class_points(self, label: str) -> np.ndarray:
        return self.points[self.labels.index(label)]


@dataclass(frozen=True)
class DistanceDataset:
    """Per-point labels plus a symmetric matrix of pairwise distances.

    The ambient dimension N is not recoverable from distances alone, so it is
    carried explicitly for the pairwise-distance radius estimator.
    """

    point_labels: tuple[str, ...]
    distances: np.ndarray
    dimension: int

    def __post_init__(self):
        D = np.asarray(self.distances, dtype=float)
        labels = tuple(str(label) for label in self.point_labels)
        if D.ndim != 2 or D.shape[0] != D.shape[1]:
            raise ValidationError(f"distance matrix must be square, got shape {D.shape}")
        if D.shape[0] != len(labels):
            raise ValidationError(f"{len(labels)} labels for a {D.shape[0]} x {D.shape[0]} matrix")
        if not np.all(np.isfinite(D)):
            raise ValidationError("distance matrix has non-finite entries")
        if not np.array_equal(D, D.T):
            raise ValidationError("distance matrix is not symmetric")
        if np.any(np.diag(D) != 0):
            raise ValidationError("distance matrix has a nonzero diagonal")
        if np.any(D < 0):
            raise ValidationError("distance matrix has negative entries")
        if int(self.dimension) < 1:
            raise ValidationError(f"dimension must be positive, got {self.dimension}")

        object.__setattr__(self, "point_labels", labels)
        object.__setattr__(self, "distances", _frozen(D))
        object.__setattr__(self, "dimension", int(self.dimension))

        for label in self.labels:
            if self.point_labels.count(label) < 2:
                raise ValidationError(f"class {label!r}: needs at least 2 points")

    @property
    def labels(self) -> tuple[str, ...]:
        """Class labels in order of first appearance."""
        return tuple(dict.fromkeys(self.point_labels))

    @property
    def n_classes(self) -> int:
        return len(self.labels)

    def indices(self, label: str) -> np.ndarray:
        return np.flatnonzero(np.asarray(self.point_labels) == label)

    def block(self, label_a: str, label_b: str) -> np.ndarray:
        return self.distances[np.ix_(self.indices(label_a), self.indices(label_b))]


@dataclass(frozen=True)
class Hypersphere:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        center = np.atleast_1d(np.asarray(self.center, dtype=float))
        if not np.all(np.isfinite(center)):
            raise ValidationError("hypersphere center is not finite")
        if not np.isfinite(self.radius) or self.radius < 0:
            raise ValidationError(f"hypersphere radius must be finite and >= 0, got {self.radius}")
        object.__setattr__(self, "center", _frozen(center))
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dimension(self) -> int:
        return self.center.shape[0]

    def to_dict(self) -> dict:
        return {"center": self.center.tolist(), "radius": self.radius}

    @classmethod
    def from_dict(cls, data: dict) -> "Hypersphere":
        return cls(np.asarray(data["center"], dtype=float), float(data["radius"]))


@dataclass(frozen=True)
class HypersphereEnsemble:
    labels: tuple[str, ...]
    spheres: tuple[Hypersphere, ...]

    def __post_init__(self):
        if len(self.spheres) < 1:
            raise ValidationError("an ensemble needs at least one hypersphere")
        if len(self.labels) != len(self.spheres):
            raise ValidationError("labels and spheres differ in length")
        dims = {sphere.dimension for sphere in self.spheres}
        if len(dims) != 1:
            raise ValidationError(f"hypersphere centers disagree on dimension: {sorted(dims)}")
        object.__setattr__(self, "labels", tuple(str(label) for label in self.labels))
        object.__setattr__(self, "spheres", tuple(self.spheres))

    @property
    def centers(self) -> np.ndarray:
        return np.vstack([sphere.center for sphere in self.spheres])

    @property
    def radii(self) -> np.ndarray:
        return np.array([sphere.radius for sphere in self.spheres])

    def to_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "spheres": [sphere.to_dict() for sphere in self.spheres],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "HypersphereEnsemble":
        return cls(tuple(data["labels"]), tuple(Hypersphere.from_dict(s) for s in data["spheres"]))


@dataclass(frozen=True)
class SummaryStats:
    """Radii, center distances and margins of T spheres, in caller length units.

    Margins are derived on construction as ``d_ij - r_i - r_j``; the overlap of
    a pair is the negated margin.
    """

    labels: tuple[str, ...]
    radii: np.ndarray
    distances: np.ndarray
    margins: np.ndarray = field(init=False)

    def __post_init__(self):
        r = np.atleast_1d(np.asarray(self.radii, dtype=float))
        d = np.asarray(self.distances, dtype=float)
        T = r.shape[0]
        if len(self.labels) != T:
            raise ValidationError(f"{len(self.labels)} labels for {T} radii")
        if d.shape != (T, T):
            raise ValidationError(f"distance matrix must be {T} x {T}, got {d.shape}")
        if np.any(d < 0) or np.any(r < 0):
            raise ValidationError("distances and radii must be nonnegative")

        d = 0.5 * (d + d.T)
        np.fill_diagonal(d, 0.0)
        m = d - r[:, None] - r[None, :]

        object.__setattr__(self, "labels", tuple(str(label) for label in self.labels))
        object.__setattr__(self, "radii", _frozen(r))
        object.__setattr__(self, "distances", _frozen(d))
        object.__setattr__(self, "margins", _frozen(m))

    @property
    def n_classes(self) -> int:
        return self.radii.shape[0]

    @property
    def overlaps(self) -> np.ndarray:
        return -self.margins

    def pairs(self) -> list[tuple[int, int]]:
        """Class index pairs (i, j) with i < j, in row-major order."""
        T = self.n_classes
        return [(i, j) for i in range(T) for j in range(i + 1, T)]

    def pair_values(self, matrix: np.ndarray) -> np.ndarray:
        iu = np.triu_indices(self.n_classes, k=1)
        return np.asarray(matrix)[iu]

    @property
    def scale(self) -> float:
        """Characteristic length: mean center distance, else mean radius, else 1."""
        if self.n_classes > 1:
            mean_d = float(np.mean(self.pair_values(self.distances)))
            if mean_d > 0:
                return mean_d
        mean_r = float(np.mean(self.radii))
        return mean_r if mean_r > 0 else 1.0

    def to_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "radii": self.radii.tolist(),
            "distances": self.distances.tolist(),
            "margins": self.margins.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SummaryStats":
        return cls(tuple(data["labels"]), np.asarray(data["radii"]), np.asarray(data["distances"]))


def d2c(points: np.ndarray, center: np.ndarray) -> np.ndarray:
    """Euclidean distance of every point to ``center``."""
    points = np.asarray(points, dtype=float)
    center = np.asarray(center, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    if center.ndim != 1 or points.shape[1] != center.shape[0]:
        raise ValidationError(
            f"dimension mismatch: points are {points.shape[1]}-dimensional, center has shape {center.shape}"
        )
    return np.linalg.norm(points - center, axis=1)


def summary_stats(ensemble: HypersphereEnsemble) -> SummaryStats:
    """Radii, center distances and margins of an ensemble."""
    centers = ensemble.centers
    distances = cdist(centers, centers)
    return SummaryStats(ensemble.labels, ensemble.radii, distances)
