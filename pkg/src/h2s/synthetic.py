"""Ground-truth generators, estimator benchmark, test calibration and table re-derivation."""

import csv
import json
import logging
import math
import string
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.spatial.distance import pdist

from .errors import ValidationError
from .estimators import Estimator, EstimatorChoice, adaptive_criterion, estimate_sphere, gamma_fn, r_mean_d2c
from .geometry import Hypersphere, HypersphereEnsemble, LabeledDataset
from .inference import (
    ResamplingConfig,
    TestKind,
    TestResult,
    overlap_diff_test,
    overlap_test,
    radius_diff_test,
    separation_diff_test,
    separation_test,
)
from .tables import DEFAULT_TABLES, INV_ZETA_TABLE, XI_TABLE, CalibrationTables
from .workers import parallel_map

logger = logging.getLogger(__name__)

MEAN_D2C = "MEAN_D2C"
DEFAULT_BENCH_DIMENSIONS = (16, 200, 1024)
DEFAULT_BENCH_SIZES = (200,)


class Distribution(str, Enum):
    BALL = "BALL"
    GAUSSIAN = "GAUSSIAN"
    CUBE = "CUBE"


class ScenarioKind(str, Enum):
    TOUCHING = "TOUCHING"
    CONCENTRIC = "CONCENTRIC"
    ENCLOSED_TOUCHING = "ENCLOSED_TOUCHING"
    INTERSECTING = "INTERSECTING"
    IMBALANCED = "IMBALANCED"
    CUSTOM = "CUSTOM"


def seed_sequence(seed, *extra: int) -> list[int]:
    """Flatten an int or int sequence plus extra ids into one seed list."""
    return [int(s) for s in np.atleast_1d(seed)] + [int(e) for e in extra]


def _center(n: int, center) -> np.ndarray:
    if center is None:
        return np.zeros(n)
    center = np.asarray(center, dtype=float)
    if center.shape != (n,):
        raise ValidationError(f"center must have length {n}, got shape {center.shape}")
    return center


def sample_ball(n: int, p: int, center=None, radius: float = 1.0, seed=0) -> np.ndarray:
    """Uniform samples inside an n-ball: Gaussian direction times U^(1/n) radius."""
    if radius < 0:
        raise ValidationError(f"radius must be >= 0, got {radius}")
    rng = np.random.default_rng(seed)
    directions = rng.standard_normal((p, n))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    lengths = radius * rng.random(p) ** (1.0 / n)
    return _center(n, center) + directions * lengths[:, None]


def sample_gaussian(n: int, p: int, center=None, scale: float = 1.0, seed=0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return _center(n, center) + scale * rng.standard_normal((p, n))


def sample_cube(n: int, p: int, center=None, scale: float = 1.0, seed=0) -> np.ndarray:
    """Uniform samples in an axis-aligned cube of side ``scale``."""
    rng = np.random.default_rng(seed)
    return _center(n, center) + scale * (rng.random((p, n)) - 0.5)


_SAMPLERS = {
    Distribution.BALL: sample_ball,
    Distribution.GAUSSIAN: sample_gaussian,
    Distribution.CUBE: sample_cube,
}


def expected_radius(distribution: Distribution, n: int, scale: float = 1.0) -> float:
    """Ground-truth radius of one generated class.

    The ball's radius; for the Gaussian and the cube, the mean distance to
    center (chi mean, and sqrt(n/12 - 1/60) to second order).
    """
    distribution = Distribution(distribution)
    if distribution is Distribution.BALL:
        return scale
    if distribution is Distribution.GAUSSIAN:
        return scale * gamma_fn(n)
    return scale * math.sqrt(n / 12.0 - 1.0 / 60.0)


def sample(distribution: Distribution, n: int, p: int, center=None, radius: float = 1.0, seed=0) -> np.ndarray:
    """Draw ``p`` points whose ground-truth radius is ``radius``."""
    distribution = Distribution(distribution)
    scale = radius / expected_radius(distribution, n)
    return _SAMPLERS[distribution](n, p, center, scale, seed)


@dataclass(frozen=True)
class ScenarioSpec:
    """Class layout along the first axis: one radius, offset and size per class."""

    kind: ScenarioKind = ScenarioKind.TOUCHING
    dimension: int = 200
    samples: tuple[int, ...] = (100, 100)
    radii: tuple[float, ...] = (1.0, 1.0)
    offsets: tuple[float, ...] = (0.0, 2.0)
    distribution: Distribution = Distribution.BALL
    seed: int | Sequence[int] = 0
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", ScenarioKind(self.kind))
        object.__setattr__(self, "distribution", Distribution(self.distribution))
        object.__setattr__(self, "samples", tuple(int(s) for s in self.samples))
        object.__setattr__(self, "radii", tuple(float(r) for r in self.radii))
        object.__setattr__(self, "offsets", tuple(float(o) for o in self.offsets))
        T = len(self.radii)
        if T < 1 or len(self.samples) != T or len(self.offsets) != T:
            raise ValidationError("samples, radii and offsets need one entry per class")
        if self.labels is not None and len(self.labels) != T:
            raise ValidationError(f"{len(self.labels)} labels for {T} classes")
        if int(self.dimension) < 1:
            raise ValidationError(f"dimension must be positive, got {self.dimension}")
        if min(self.samples) < 2:
            raise ValidationError("every class needs at least 2 samples")
        if min(self.radii) < 0:
            raise ValidationError("radii must be >= 0")
        self._check_geometry()

    def _check_geometry(self):
        if self.kind is ScenarioKind.CUSTOM:
            return
        if len(self.radii) != 2:
            raise ValidationError(f"{self.kind.value} scenarios have exactly 2 classes")
        r1, r2 = self.radii
        d = abs(self.offsets[1] - self.offsets[0])
        expected = {
            ScenarioKind.TOUCHING: r1 + r2,
            ScenarioKind.IMBALANCED: r1 + r2,
            ScenarioKind.CONCENTRIC: 0.0,
            ScenarioKind.ENCLOSED_TOUCHING: abs(r1 - r2),
            ScenarioKind.INTERSECTING: r1,
        }[self.kind]
        if not math.isclose(d, expected, rel_tol=1e-12, abs_tol=1e-12):
            raise ValidationError(f"{self.kind.value} needs center offset {expected}, got {d}")
        if self.kind is ScenarioKind.INTERSECTING and r1 != r2:
            raise ValidationError("INTERSECTING needs equal radii")

    @classmethod
    def for_kind(
        cls,
        kind: ScenarioKind | str,
        dimension: int = 200,
        samples_per_class: int = 100,
        radius: float = 1.0,
        distribution: Distribution = Distribution.BALL,
        seed: int = 0,
    ) -> "ScenarioSpec":
        """The standard two-class layout of a named kind."""
        kind = ScenarioKind(kind)
        r = float(radius)
        P = samples_per_class
        layouts = {
            ScenarioKind.TOUCHING: ((P, P), (r, r), (0.0, 2 * r)),
            ScenarioKind.CONCENTRIC: ((P, P), (r, 0.5 * r), (0.0, 0.0)),
            ScenarioKind.ENCLOSED_TOUCHING: ((P, P), (r, 0.5 * r), (0.0, 0.5 * r)),
            ScenarioKind.INTERSECTING: ((P, P), (r, r), (0.0, r)),
            ScenarioKind.IMBALANCED: ((P, max(2, P // 5)), (r, r), (0.0, 2 * r)),
        }
        if kind not in layouts:
            raise ValidationError("CUSTOM scenarios are built directly from ScenarioSpec(...)")
        samples, radii, offsets = layouts[kind]
        return cls(kind, dimension, samples, radii, offsets, distribution, seed)

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioSpec":
        data = dict(data)
        if "samples" not in data and data.get("kind", "CUSTOM") != "CUSTOM":
            return cls.for_kind(
                data["kind"],
                dimension=data.get("dimension", 200),
                samples_per_class=data.get("samples_per_class", 100),
                radius=data.get("radius", 1.0),
                distribution=data.get("distribution", Distribution.BALL),
                seed=data.get("seed", 0),
            )
        for key in ("samples", "radii", "offsets", "labels"):
            if data.get(key) is not None:
                data[key] = tuple(data[key])
        data.pop("samples_per_class", None)
        data.pop("radius", None)
        return cls(**data)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["kind"] = self.kind.value
        data["distribution"] = self.distribution.value
        for key in ("samples", "radii", "offsets", "labels"):
            if data[key] is not None:
                data[key] = list(data[key])
        return data


def generate_scenario(spec: ScenarioSpec) -> tuple[LabeledDataset, HypersphereEnsemble]:
    """Sample every class and return the data with its exact ground-truth spheres."""
    T = len(spec.radii)
    labels = spec.labels or tuple(string.ascii_uppercase[k] if k < 26 else f"C{k}" for k in range(T))
    points = []
    spheres = []
    for k in range(T):
        center = np.zeros(spec.dimension)
        center[0] = spec.offsets[k]
        points.append(sample(spec.distribution, spec.dimension, spec.samples[k], center, spec.radii[k], seed_sequence(spec.seed, k)))
        spheres.append(Hypersphere(center, spec.radii[k]))
    logger.debug(f"Generated {spec.kind.value} scenario: N={spec.dimension}, samples={spec.samples}")
    return LabeledDataset(tuple(labels), tuple(points)), HypersphereEnsemble(tuple(labels), tuple(spheres))


@dataclass(frozen=True)
class BenchmarkRow:
    name: str
    distribution: str
    n: int
    p: int
    mean: float
    std: float
    fpr: float | None = None


def estimator_benchmark(
    estimators: Sequence[str] = (Estimator.ADAPTIVE.value, MEAN_D2C),
    distributions: Sequence[Distribution] = tuple(Distribution),
    dimensions: Sequence[int] = DEFAULT_BENCH_DIMENSIONS,
    sizes: Sequence[int] = DEFAULT_BENCH_SIZES,
    repetitions: int = 100,
    seed: int = 0,
    tables: CalibrationTables = DEFAULT_TABLES,
    workers: int | None = None,
) -> list[BenchmarkRow]:
    """Radius-normalized squared error ((r^ - r) / r)^2 per estimator, distribution, N and P.

    Every estimator sees the same datasets within a grid cell. ``MEAN_D2C``
    selects the naive mean distance-to-center baseline.
    """
    if not (estimators and distributions and dimensions and sizes) or repetitions < 1:
        raise ValidationError("benchmark grids must be nonempty and repetitions positive")
    names = [e.upper() if isinstance(e, str) else Estimator(e).value for e in estimators]
    choices = {name: None if name == MEAN_D2C else EstimatorChoice(name) for name in names}

    rows = []
    for dist_index, distribution in enumerate(Distribution(d) for d in distributions):
        for n in dimensions:
            for p in sizes:

                def run(rep: int) -> dict[str, float]:
                    X = sample(distribution, n, p, None, 1.0, [seed, dist_index, n, p, rep])
                    errors = {}
                    for name, choice in choices.items():
                        if choice is None:
                            r_hat = r_mean_d2c(X)
                        else:
                            r_hat = estimate_sphere(X, choice, tables, seed=[seed, n, p, rep]).radius
                        errors[name] = (r_hat - 1.0) ** 2
                    return errors

                results = parallel_map(run, range(repetitions), workers)
                for name in names:
                    errs = np.array([res[name] for res in results])
                    rows.append(BenchmarkRow(name, distribution.value, n, p, float(errs.mean()), float(errs.std())))
                logger.info(f"Benchmarked {distribution.value} N={n} P={p} over {repetitions} repetitions")
    return rows


@dataclass(frozen=True)
class CalibrationResult:
    """False-positive rate of one test under its null, with variance diagnostics.

    ``estimate_variance`` is the spread of the full-data statistic across
    simulations; ``resample_variance`` the mean spread of the statistic within
    each simulation's permutation or bootstrap distribution.
    """

    kind: TestKind
    n_simulations: int
    n_significant: int
    estimate_mean: float
    estimate_variance: float
    resample_variance: float
    dimension: int
    samples: int
    distribution: Distribution

    @property
    def fpr(self) -> float:
        return self.n_significant / self.n_simulations

    def to_row(self) -> BenchmarkRow:
        return BenchmarkRow(
            self.kind.value,
            self.distribution.value,
            self.dimension,
            self.samples,
            self.estimate_mean,
            math.sqrt(self.estimate_variance),
            self.fpr,
        )


def null_scenario(kind: TestKind, dimension: int, samples: int, distribution: Distribution, seed, radius_ratio: float = 1.0) -> LabeledDataset:
    """Data satisfying the null hypothesis of ``kind``.

    Separation: two classes sharing a center. Overlap: tangent spheres.
    Radius difference: equal radii, separated centers. Separation and overlap
    differences: class 0 equidistant from classes 1 and 2 (whose radii are
    ``radius_ratio``), so both pair statistics agree.
    """
    kind = TestKind(kind)
    if kind is TestKind.SEPARATION:
        spec = ScenarioSpec(ScenarioKind.CUSTOM, dimension, (samples, samples), (1.0, 1.0), (0.0, 0.0), distribution, 0)
        return generate_scenario(replace(spec, seed=seed))[0]
    if kind is TestKind.OVERLAP:
        spec = ScenarioSpec.for_kind(ScenarioKind.TOUCHING, dimension, samples, 1.0, distribution)
        return generate_scenario(replace(spec, seed=seed))[0]
    if kind is TestKind.RADIUS_DIFF:
        spec = ScenarioSpec(ScenarioKind.CUSTOM, dimension, (samples, samples), (1.0, 1.0), (0.0, 3.0), distribution, 0)
        return generate_scenario(replace(spec, seed=seed))[0]

    if dimension < 2:
        raise ValidationError("triplet nulls need at least 2 dimensions")
    side = 3.0
    centers = [np.zeros(dimension), np.zeros(dimension), np.zeros(dimension)]
    centers[1][0] = side
    centers[2][0] = side / 2.0
    centers[2][1] = side * math.sqrt(3.0) / 2.0
    radii = (1.0, radius_ratio, radius_ratio)
    points = tuple(sample(distribution, dimension, samples, centers[k], radii[k], seed_sequence(seed, k)) for k in range(3))
    return LabeledDataset(("A", "B", "C"), points)


def _run_single(kind: TestKind, dataset: LabeledDataset, choice: EstimatorChoice, config: ResamplingConfig, tables) -> TestResult:
    pts = dataset.points
    if kind is TestKind.SEPARATION:
        return separation_test(pts[0], pts[1], config)
    if kind is TestKind.OVERLAP:
        return overlap_test(pts[0], pts[1], choice, config, tables)
    if kind is TestKind.RADIUS_DIFF:
        return radius_diff_test(pts[0], pts[1], choice, config, tables)
    if kind is TestKind.SEPARATION_DIFF:
        return separation_diff_test(list(pts), (0, 1), (0, 2), choice, config, tables)
    return overlap_diff_test(list(pts), (0, 1), (0, 2), choice, config, tables)


def calibration_fpr(
    kind: TestKind,
    n_simulations: int = 400,
    config: ResamplingConfig = ResamplingConfig(n_resamples=1_000),
    dimension: int = 2,
    samples: int = 128,
    distribution: Distribution = Distribution.BALL,
    choice: EstimatorChoice = EstimatorChoice(),
    seed: int = 0,
    radius_ratio: float = 1.0,
    tables: CalibrationTables = DEFAULT_TABLES,
) -> CalibrationResult:
    """Simulate the null of ``kind`` repeatedly and count uncorrected rejections."""
    kind = TestKind(kind)
    distribution = Distribution(distribution)
    if n_simulations < 1:
        raise ValidationError("n_simulations must be positive")
    if kind is TestKind.OVERLAP and samples > 1_000:
        logger.warning(f"Overlap test calibration at {samples} samples/class: expect an inflated false-positive rate")

    def simulate(sim: int) -> TestResult:
        data = null_scenario(kind, dimension, samples, distribution, [seed, sim], radius_ratio)
        sim_seed = int(np.random.SeedSequence([config.seed, seed, sim]).generate_state(1)[0])
        return _run_single(kind, data, choice, replace(config, seed=sim_seed, workers=1), tables)

    results = parallel_map(simulate, range(n_simulations), config.workers)
    estimates = np.array([r.estimate for r in results])
    calibration = CalibrationResult(
        kind=kind,
        n_simulations=n_simulations,
        n_significant=sum(r.significant for r in results),
        estimate_mean=float(estimates.mean()),
        estimate_variance=float(np.var(estimates, ddof=1)) if n_simulations > 1 else 0.0,
        resample_variance=float(np.mean([r.resample_variance for r in results])),
        dimension=dimension,
        samples=samples,
        distribution=distribution,
    )
    logger.info(f"{kind.value} null FPR {calibration.fpr:.3f} over {n_simulations} simulations (N={dimension}, P={samples})")
    return calibration


def derive_xi(dimensions: Sequence[int] = tuple(XI_TABLE), repetitions: int = 100, seed: int = 0, samples: int = 200) -> dict[int, float]:
    """xi(N) minimizing the mean squared error of median + xi * std on unit N-balls.

    The error is quadratic in xi, so the minimizer is sum(s (1 - m)) / sum(s^2)
    over repetitions with median m and standard deviation s of the distances
    to the sample mean.
    """
    xi = {}
    for n in dimensions:
        medians = np.empty(repetitions)
        spreads = np.empty(repetitions)
        for rep in range(repetitions):
            X = sample_ball(n, samples, None, 1.0, [seed, n, rep])
            delta = np.linalg.norm(X - X.mean(axis=0), axis=1)
            medians[rep] = np.median(delta)
            spreads[rep] = np.std(delta, ddof=1)
        xi[int(n)] = float(np.sum(spreads * (1.0 - medians)) / np.sum(spreads**2))
        logger.debug(f"xi({n}) = {xi[int(n)]:.4f}")
    return xi


def derive_zeta(dimensions: Sequence[int] = tuple(INV_ZETA_TABLE), repetitions: int = 100, seed: int = 0, samples: int = 200) -> dict[int, float]:
    """1/zeta(N): mean pairwise distance of unit N-ball samples."""
    inv_zeta = {}
    for n in dimensions:
        means = [np.mean(pdist(sample_ball(n, samples, None, 1.0, [seed, n, rep]))) for rep in range(repetitions)]
        inv_zeta[int(n)] = float(np.mean(means))
        logger.debug(f"1/zeta({n}) = {inv_zeta[int(n)]:.4f}")
    return inv_zeta


def derive_tables(
    xi_dimensions: Sequence[int] = tuple(XI_TABLE),
    zeta_dimensions: Sequence[int] = tuple(INV_ZETA_TABLE),
    repetitions: int = 100,
    seed: int = 0,
) -> CalibrationTables:
    logger.info(f"Deriving calibration tables over {repetitions} repetitions")
    return CalibrationTables(derive_xi(xi_dimensions, repetitions, seed), derive_zeta(zeta_dimensions, repetitions, seed))


@dataclass(frozen=True)
class ConvergenceRow:
    distribution: str
    n: int
    p: int
    variance_mean: float
    variance_std: float
    gaussian_fraction: float
    classified_correctly: float | None = field(default=None)


def d2c_convergence(
    distributions: Sequence[Distribution] = tuple(Distribution),
    dimensions: Sequence[int] = (2, 64, 4096),
    repetitions: int = 100,
    samples: int = 200,
    seed: int = 0,
) -> list[ConvergenceRow]:
    """Variance of median-normalized D2C and the adaptive criterion's verdicts.

    ``gaussian_fraction`` is the share of datasets the criterion sends to the
    Gaussian estimator; for BALL and GAUSSIAN data, ``classified_correctly``
    is the share it routes to the matching estimator.
    """
    rows = []
    for dist_index, distribution in enumerate(Distribution(d) for d in distributions):
        for n in dimensions:
            variances = np.empty(repetitions)
            gaussian = np.empty(repetitions, dtype=bool)
            for rep in range(repetitions):
                X = sample(distribution, n, samples, None, 1.0, [seed, dist_index, n, rep])
                variances[rep], threshold = adaptive_criterion(X)
                gaussian[rep] = variances[rep] > threshold
            fraction = float(gaussian.mean())
            correct = {Distribution.GAUSSIAN: fraction, Distribution.BALL: 1.0 - fraction}.get(distribution)
            rows.append(
                ConvergenceRow(distribution.value, n, samples, float(variances.mean()), float(variances.std()), fraction, correct)
            )
    return rows


def write_rows_csv(rows: Sequence, path: str | Path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not rows:
        raise ValidationError("no rows to write")
    records = [asdict(row) for row in rows]
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(records[0]))
        writer.writeheader()
        writer.writerows(records)


def write_rows_json(rows: Sequence, path: str | Path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump([asdict(row) for row in rows], f, indent=2, sort_keys=True)
        f.write("\n")
