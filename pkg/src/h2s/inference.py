"""Permutation and bootstrap significance tests on hypersphere statistics.

First-order tests cover each class pair (separation, overlap); second-order
tests compare statistics across pairs (radius differences, separation and
overlap differences). P-values are FDR-corrected per test family.
"""

import logging
import math
import zlib
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from scipy.stats import norm
from statsmodels.stats.multitest import multipletests

from .errors import H2SError, ValidationError
from .estimators import EstimatorChoice, estimate_sphere
from .geometry import Hypersphere, LabeledDataset
from .tables import DEFAULT_TABLES, CalibrationTables
from .workers import parallel_map

logger = logging.getLogger(__name__)

OVERLAP_CAUTION_POINTS = 1_000

# stream ids keep the permutation, split and bootstrap draws independent
_STREAM_SPLIT = 0
_STREAM_PERMUTE = 1
_STREAM_BOOTSTRAP = 2


class TestKind(str, Enum):
    SEPARATION = "SEPARATION"
    OVERLAP = "OVERLAP"
    RADIUS_DIFF = "RADIUS_DIFF"
    SEPARATION_DIFF = "SEPARATION_DIFF"
    OVERLAP_DIFF = "OVERLAP_DIFF"

    __test__ = False


@dataclass(frozen=True)
class ResamplingConfig:
    n_resamples: int = 5_000
    alpha_level: float = 0.05
    seed: int = 0
    n_splits: int = 10
    workers: int | None = None

    def __post_init__(self):
        if int(self.n_resamples) < 1:
            raise ValidationError(f"n_resamples must be positive, got {self.n_resamples}")
        if not 0.0 < float(self.alpha_level) < 1.0:
            raise ValidationError(f"alpha_level must be in (0, 1), got {self.alpha_level}")
        if int(self.n_splits) < 1:
            raise ValidationError(f"n_splits must be positive, got {self.n_splits}")
        if int(self.n_resamples) < 100:
            logger.warning(f"n_resamples={self.n_resamples} is below 100; p-values are too coarse for significance claims")


@dataclass(frozen=True)
class TestResult:
    """One test outcome.

    ``significant`` is the pre-FDR decision until ``fdr_correct`` has run over
    the test's family, after which it is the BH decision and ``adjusted_p`` is
    set. Permutation tests have no confidence interval.
    """

    kind: TestKind
    estimate: float
    p_value: float
    significant: bool
    ci_low: float | None = None
    ci_high: float | None = None
    adjusted_p: float | None = None
    resample_variance: float = float("nan")
    classes: tuple[str, ...] = ()
    validated: bool = True

    __test__ = False

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "estimate": self.estimate,
            "p_value": self.p_value,
            "significant": self.significant,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "adjusted_p": self.adjusted_p,
            "resample_variance": None if math.isnan(self.resample_variance) else self.resample_variance,
            "classes": list(self.classes),
            "validated": self.validated,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TestResult":
        variance = data.get("resample_variance")
        return cls(
            kind=TestKind(data["kind"]),
            estimate=float(data["estimate"]),
            p_value=float(data["p_value"]),
            significant=bool(data["significant"]),
            ci_low=data.get("ci_low"),
            ci_high=data.get("ci_high"),
            adjusted_p=data.get("adjusted_p"),
            resample_variance=float("nan") if variance is None else float(variance),
            classes=tuple(data.get("classes", ())),
            validated=bool(data.get("validated", True)),
        )


Cell = TestResult | None


@dataclass(frozen=True)
class InferenceReport:
    """Test results in diagram layout.

    ``first_order`` is T x T: separations below the diagonal, overlaps above,
    and nothing on the diagonal (a nonzero radius needs no test).
    ``second_order`` is K x K over the class pairs in ``pairs``: radius
    differences on the diagonal, separation differences below, overlap
    differences above.
    """

    labels: tuple[str, ...]
    pairs: tuple[tuple[int, int], ...]
    first_order: list[list[Cell]]
    second_order: list[list[Cell]]
    fdr_alpha: float
    n_resamples: int
    seed: int
    errors: list[str] = field(default_factory=list)

    def results(self, kind: TestKind | None = None) -> list[TestResult]:
        cells = [c for row in self.first_order for c in row] + [c for row in self.second_order for c in row]
        return [c for c in cells if c is not None and (kind is None or c.kind is kind)]

    def to_dict(self) -> dict:
        def grid(rows):
            return [[None if c is None else c.to_dict() for c in row] for row in rows]

        return {
            "labels": list(self.labels),
            "pairs": [list(p) for p in self.pairs],
            "first_order": grid(self.first_order),
            "second_order": grid(self.second_order),
            "fdr_alpha": self.fdr_alpha,
            "n_resamples": self.n_resamples,
            "seed": self.seed,
            "errors": list(self.errors),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "InferenceReport":
        def grid(rows):
            return [[None if c is None else TestResult.from_dict(c) for c in row] for row in rows]

        return cls(
            labels=tuple(data["labels"]),
            pairs=tuple(tuple(p) for p in data["pairs"]),
            first_order=grid(data["first_order"]),
            second_order=grid(data["second_order"]),
            fdr_alpha=float(data["fdr_alpha"]),
            n_resamples=int(data["n_resamples"]),
            seed=int(data["seed"]),
            errors=list(data.get("errors", [])),
        )


def stream_key(name: str) -> int:
    """Stable integer id for seeding a named test."""
    return zlib.crc32(name.encode("utf-8"))


def _split_weights(P: int, n_splits: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Averaging weights for random half-splits: rows of (A, B) sum to 1."""
    half = P // 2
    order = np.argsort(rng.random((n_splits, P)), axis=1)
    in_a = np.zeros((n_splits, P), dtype=bool)
    np.put_along_axis(in_a, order[:, :half], True, axis=1)
    return in_a / half, ~in_a / (P - half)


def _crossval_from(X_i: np.ndarray, X_j: np.ndarray, n_splits: int, rng: np.random.Generator) -> float:
    A_i, B_i = _split_weights(X_i.shape[0], n_splits, rng)
    A_j, B_j = _split_weights(X_j.shape[0], n_splits, rng)
    v_a = A_i @ X_i - A_j @ X_j
    v_b = B_i @ X_i - B_j @ X_j
    inner = float(np.mean(np.sum(v_a * v_b, axis=1)))
    return math.copysign(math.sqrt(abs(inner)), inner)


def _check_splittable(X_i: np.ndarray, X_j: np.ndarray):
    if X_i.shape[0] < 4 or X_j.shape[0] < 4:
        raise ValidationError(
            f"cross-validated separation needs at least 4 points per class, got {X_i.shape[0]} and {X_j.shape[0]}"
        )


def crossval_separation(points_i, points_j, split_seed=0, n_splits: int = 1) -> float:
    """Signed square root of the inner product of half-split center differences.

    With ``n_splits`` > 1 the inner product is averaged over that many
    independent splits before the square root is taken.
    """
    X_i = np.asarray(points_i, dtype=float)
    X_j = np.asarray(points_j, dtype=float)
    _check_splittable(X_i, X_j)
    return _crossval_from(X_i, X_j, n_splits, np.random.default_rng(split_seed))


def separation_test(points_i, points_j, config: ResamplingConfig = ResamplingConfig(), test_id: str = "separation") -> TestResult:
    """One-sided label-permutation test of the cross-validated separation.

    Both the observed statistic and every permuted statistic average the same
    number of random splits, so they share one distribution under the null.
    """
    X_i = np.asarray(points_i, dtype=float)
    X_j = np.asarray(points_j, dtype=float)
    _check_splittable(X_i, X_j)
    key = stream_key(test_id)
    seed = config.seed

    observed = _crossval_from(X_i, X_j, config.n_splits, np.random.default_rng([seed, key, _STREAM_SPLIT]))
    pooled = np.vstack([X_i, X_j])
    P_i = X_i.shape[0]

    def permuted(b: int) -> float:
        rng = np.random.default_rng([seed, key, _STREAM_PERMUTE, b])
        perm = rng.permutation(pooled.shape[0])
        return _crossval_from(pooled[perm[:P_i]], pooled[perm[P_i:]], config.n_splits, rng)

    null = np.asarray(parallel_map(permuted, range(config.n_resamples), config.workers))
    p_value = (1.0 + float(np.sum(null >= observed))) / (1.0 + null.shape[0])
    significant = bool(observed > np.quantile(null, 1.0 - config.alpha_level))
    return TestResult(
        TestKind.SEPARATION,
        observed,
        p_value,
        significant,
        resample_variance=float(np.var(null, ddof=1)) if null.shape[0] > 1 else 0.0,
    )


def bca_interval(bootstrap_estimates, jackknife_estimates, observed: float, alpha_level: float = 0.05) -> tuple[float, float]:
    """Bias-corrected and accelerated bootstrap interval.

    Args:
        bootstrap_estimates: Statistic on each bootstrap resample.
        jackknife_estimates: Statistic with each observation left out once.
        observed: Statistic on the full data.
        alpha_level: Two-sided level; the interval covers 1 - alpha_level.

    Returns:
        (low, high)
    """
    boot = np.asarray(bootstrap_estimates, dtype=float)
    jack = np.asarray(jackknife_estimates, dtype=float)
    if boot.size == 0:
        raise ValidationError("bca_interval needs bootstrap estimates")
    if np.all(boot == boot[0]):
        return float(boot[0]), float(boot[0])

    z0 = _bias_correction(boot, observed)
    a = _acceleration(jack)
    z = norm.ppf([alpha_level / 2.0, 1.0 - alpha_level / 2.0])
    adjusted = norm.cdf(z0 + (z0 + z) / (1.0 - a * (z0 + z)))
    low, high = np.quantile(boot, np.nan_to_num(adjusted, nan=0.5))
    return float(low), float(high)


def _below_fraction(boot: np.ndarray, value: float) -> float:
    B = boot.shape[0]
    frac = (np.sum(boot < value) + 0.5 * np.sum(boot == value)) / B
    return float(np.clip(frac, 0.5 / B, 1.0 - 0.5 / B))


def _bias_correction(boot: np.ndarray, observed: float) -> float:
    return float(norm.ppf(_below_fraction(boot, observed)))


def _acceleration(jack: np.ndarray) -> float:
    if jack.size < 2:
        return 0.0
    d = jack.mean() - jack
    denom = 6.0 * float(np.sum(d**2)) ** 1.5
    return float(np.sum(d**3)) / denom if denom > 0 else 0.0


def percentile_p_value(boot: np.ndarray) -> float:
    """Two-sided bootstrap p-value: twice the smaller tail mass beyond 0."""
    if np.all(boot == boot[0]):
        return 1.0 if boot[0] == 0 else 1.0 / (boot.shape[0] + 1)
    q = _below_fraction(boot, 0.0)
    return float(min(1.0, 2.0 * min(q, 1.0 - q)))


def bca_p_value(boot: np.ndarray, jack: np.ndarray, observed: float) -> float:
    """Smallest two-sided level at which 0 leaves the BCa interval."""
    if np.all(boot == boot[0]):
        return percentile_p_value(boot)
    z0 = _bias_correction(boot, observed)
    a = _acceleration(jack)
    w = float(norm.ppf(_below_fraction(boot, 0.0))) - z0
    if 1.0 + a * w <= 0.0:
        return percentile_p_value(boot)
    z = w / (1.0 + a * w) - z0
    tail = float(norm.cdf(z))
    return float(min(1.0, 2.0 * min(tail, 1.0 - tail)))


@dataclass(frozen=True)
class ClassResamples:
    """Full-data, bootstrap and jackknife sphere fits of one class."""

    estimate: Hypersphere
    boot_centers: np.ndarray
    boot_radii: np.ndarray
    jack_centers: np.ndarray
    jack_radii: np.ndarray


def resample_class(
    points,
    choice: EstimatorChoice,
    config: ResamplingConfig,
    stream: int,
    tables: CalibrationTables = DEFAULT_TABLES,
) -> ClassResamples:
    """Fit the class on the full data, each bootstrap resample, and each leave-one-out set."""
    X = np.asarray(points, dtype=float)
    P = X.shape[0]
    seed = config.seed

    def fit(rows: np.ndarray, seq: list[int]) -> Hypersphere:
        return estimate_sphere(X[rows], choice, tables, seed=[choice.seed, *seq])

    def boot(b: int) -> Hypersphere:
        rng = np.random.default_rng([seed, stream, _STREAM_BOOTSTRAP, b])
        return fit(rng.integers(0, P, size=P), [stream, _STREAM_BOOTSTRAP, b])

    def jack(k: int) -> Hypersphere:
        return fit(np.delete(np.arange(P), k), [stream, 3, k])

    estimate = estimate_sphere(X, choice, tables, seed=[choice.seed, stream])
    boots = parallel_map(boot, range(config.n_resamples), config.workers)
    jacks = parallel_map(jack, range(P), config.workers)
    return ClassResamples(
        estimate,
        np.vstack([s.center for s in boots]),
        np.array([s.radius for s in boots]),
        np.vstack([s.center for s in jacks]),
        np.array([s.radius for s in jacks]),
    )


def _overlap_replicates(a: ClassResamples, b: ClassResamples) -> tuple[float, np.ndarray, np.ndarray]:
    observed = a.estimate.radius + b.estimate.radius - float(np.linalg.norm(a.estimate.center - b.estimate.center))
    boot = a.boot_radii + b.boot_radii - np.linalg.norm(a.boot_centers - b.boot_centers, axis=1)
    jack = np.concatenate(
        [
            a.jack_radii + b.estimate.radius - np.linalg.norm(a.jack_centers - b.estimate.center, axis=1),
            b.jack_radii + a.estimate.radius - np.linalg.norm(b.jack_centers - a.estimate.center, axis=1),
        ]
    )
    return observed, boot, jack


def _separation_replicates(a: ClassResamples, b: ClassResamples) -> tuple[float, np.ndarray]:
    observed = float(np.linalg.norm(a.estimate.center - b.estimate.center))
    return observed, np.linalg.norm(a.boot_centers - b.boot_centers, axis=1)


def _radius_diff_replicates(a: ClassResamples, b: ClassResamples) -> tuple[float, np.ndarray, np.ndarray]:
    observed = a.estimate.radius - b.estimate.radius
    boot = a.boot_radii - b.boot_radii
    jack = np.concatenate([a.jack_radii - b.estimate.radius, a.estimate.radius - b.jack_radii])
    return observed, boot, jack


def _variance(values: np.ndarray) -> float:
    return float(np.var(values, ddof=1)) if values.shape[0] > 1 else 0.0


def _bca_result(kind: TestKind, observed: float, boot: np.ndarray, jack: np.ndarray, alpha_level: float) -> TestResult:
    low, high = bca_interval(boot, jack, observed, alpha_level)
    low, high = min(low, observed), max(high, observed)
    return TestResult(
        kind,
        observed,
        bca_p_value(boot, jack, observed),
        bool(low > 0 or high < 0),
        ci_low=low,
        ci_high=high,
        resample_variance=_variance(boot),
    )


def _percentile_result(kind: TestKind, observed: float, boot: np.ndarray, alpha_level: float, validated: bool) -> TestResult:
    if np.all(boot == boot[0]):
        low = high = float(boot[0])
    else:
        low, high = (float(v) for v in np.quantile(boot, [alpha_level / 2.0, 1.0 - alpha_level / 2.0]))
    low, high = min(low, observed), max(high, observed)
    return TestResult(
        kind,
        observed,
        percentile_p_value(boot),
        bool(low > 0 or high < 0),
        ci_low=low,
        ci_high=high,
        resample_variance=_variance(boot),
        validated=validated,
    )


def _warn_large(*sizes: int):
    if max(sizes) > OVERLAP_CAUTION_POINTS:
        logger.warning(
            f"Class with {max(sizes)} points exceeds {OVERLAP_CAUTION_POINTS}; "
            "bootstrap overlap tests are known to run liberal at this size"
        )


def overlap_test(
    points_i,
    points_j,
    choice: EstimatorChoice = EstimatorChoice(),
    config: ResamplingConfig = ResamplingConfig(),
    tables: CalibrationTables = DEFAULT_TABLES,
) -> TestResult:
    """Two-sided BCa test of zero overlap between two hyperspheres."""
    X_i, X_j = np.asarray(points_i, dtype=float), np.asarray(points_j, dtype=float)
    _warn_large(X_i.shape[0], X_j.shape[0])
    a = resample_class(X_i, choice, config, 0, tables)
    b = resample_class(X_j, choice, config, 1, tables)
    return _bca_result(TestKind.OVERLAP, *_overlap_replicates(a, b), config.alpha_level)


def radius_diff_test(
    points_i,
    points_j,
    choice: EstimatorChoice = EstimatorChoice(),
    config: ResamplingConfig = ResamplingConfig(),
    tables: CalibrationTables = DEFAULT_TABLES,
) -> TestResult:
    """Two-sided BCa test of equal radii."""
    X_i, X_j = np.asarray(points_i, dtype=float), np.asarray(points_j, dtype=float)
    _warn_large(X_i.shape[0], X_j.shape[0])
    a = resample_class(X_i, choice, config, 0, tables)
    b = resample_class(X_j, choice, config, 1, tables)
    return _bca_result(TestKind.RADIUS_DIFF, *_radius_diff_replicates(a, b), config.alpha_level)


def _shares_one_class(pair_a: tuple[int, int], pair_b: tuple[int, int]) -> bool:
    return len(set(pair_a) & set(pair_b)) == 1


def _pair_diff_test(
    kind: TestKind,
    classes: list,
    pair_a: tuple[int, int],
    pair_b: tuple[int, int],
    choice: EstimatorChoice,
    config: ResamplingConfig,
    tables: CalibrationTables,
) -> TestResult:
    used = sorted(set(pair_a) | set(pair_b))
    if len(set(pair_a)) != 2 or len(set(pair_b)) != 2 or set(pair_a) == set(pair_b):
        raise ValidationError(f"pairs {pair_a} and {pair_b} must be two distinct class pairs")
    for k in used:
        if not 0 <= k < len(classes):
            raise ValidationError(f"class index {k} out of range for {len(classes)} classes")
    resamples = {k: resample_class(classes[k], choice, config, k, tables) for k in used}
    return _diff_from_resamples(kind, resamples, pair_a, pair_b, config.alpha_level)


def _diff_from_resamples(
    kind: TestKind, resamples: dict, pair_a: tuple[int, int], pair_b: tuple[int, int], alpha_level: float
) -> TestResult:
    if kind is TestKind.SEPARATION_DIFF:
        obs_a, boot_a = _separation_replicates(resamples[pair_a[0]], resamples[pair_a[1]])
        obs_b, boot_b = _separation_replicates(resamples[pair_b[0]], resamples[pair_b[1]])
    else:
        obs_a, boot_a, _ = _overlap_replicates(resamples[pair_a[0]], resamples[pair_a[1]])
        obs_b, boot_b, _ = _overlap_replicates(resamples[pair_b[0]], resamples[pair_b[1]])
    return _percentile_result(kind, obs_a - obs_b, boot_a - boot_b, alpha_level, _shares_one_class(pair_a, pair_b))


def separation_diff_test(
    classes: list,
    pair_a: tuple[int, int],
    pair_b: tuple[int, int],
    choice: EstimatorChoice = EstimatorChoice(),
    config: ResamplingConfig = ResamplingConfig(),
    tables: CalibrationTables = DEFAULT_TABLES,
) -> TestResult:
    """Bootstrap percentile test of d(pair_a) - d(pair_b) = 0.

    ``classes`` is the list of point sets the pair indices refer to. Pairs that
    do not share exactly one class are allowed but marked unvalidated.
    """
    return _pair_diff_test(TestKind.SEPARATION_DIFF, classes, pair_a, pair_b, choice, config, tables)


def overlap_diff_test(
    classes: list,
    pair_a: tuple[int, int],
    pair_b: tuple[int, int],
    choice: EstimatorChoice = EstimatorChoice(),
    config: ResamplingConfig = ResamplingConfig(),
    tables: CalibrationTables = DEFAULT_TABLES,
) -> TestResult:
    """Bootstrap percentile test of overlap(pair_a) - overlap(pair_b) = 0."""
    return _pair_diff_test(TestKind.OVERLAP_DIFF, classes, pair_a, pair_b, choice, config, tables)


def fdr_correct(p_values, alpha: float = 0.05) -> tuple[np.ndarray, np.ndarray]:
    """Benjamini-Hochberg step-up over one family.

    Returns:
        (reject flags, adjusted p-values)
    """
    p = np.asarray(p_values, dtype=float)
    if p.size == 0:
        raise ValidationError("FDR correction needs at least one p-value")
    reject, adjusted, _, _ = multipletests(p, alpha=alpha, method="fdr_bh")
    return reject, adjusted


def _apply_fdr(grid: list[list[Cell]], kind: TestKind, alpha: float):
    cells = [(r, c) for r, row in enumerate(grid) for c, cell in enumerate(row) if cell is not None and cell.kind is kind]
    if not cells:
        return
    reject, adjusted = fdr_correct([grid[r][c].p_value for r, c in cells], alpha)
    for (r, c), flag, adj in zip(cells, reject, adjusted):
        grid[r][c] = replace(grid[r][c], significant=bool(flag), adjusted_p=float(adj))
    logger.info(f"{kind.value}: {int(np.sum(reject))}/{len(cells)} significant after FDR at {alpha}")


def full_inference(
    dataset: LabeledDataset,
    choice: EstimatorChoice = EstimatorChoice(),
    config: ResamplingConfig = ResamplingConfig(),
    tables: CalibrationTables = DEFAULT_TABLES,
) -> InferenceReport:
    """Run every first- and second-order test and FDR-correct each family.

    A failing test leaves its cell empty and adds a message to ``errors``.
    """
    if not isinstance(dataset, LabeledDataset):
        raise ValidationError("inference needs point coordinates; distance-matrix input supports fitting only")
    T = dataset.n_classes
    if T < 2:
        raise ValidationError("inference needs at least 2 classes")
    labels = dataset.labels
    _warn_large(*(pts.shape[0] for pts in dataset.points))
    errors: list[str] = []

    resamples: dict[int, ClassResamples] = {}
    for k, points in enumerate(dataset.points):
        try:
            resamples[k] = resample_class(points, choice, config, k, tables)
        except H2SError as e:
            logger.error(f"Resampling class {labels[k]!r} failed: {e}")
            errors.append(f"class {labels[k]}: {e}")

    pairs = tuple((i, j) for i in range(T) for j in range(i + 1, T))
    first: list[list[Cell]] = [[None] * T for _ in range(T)]
    for i, j in pairs:
        names = (labels[i], labels[j])
        try:
            result = separation_test(dataset.points[i], dataset.points[j], config, f"separation:{labels[i]}:{labels[j]}")
            first[j][i] = replace(result, classes=names)
        except H2SError as e:
            logger.error(f"Separation test {names} failed: {e}")
            errors.append(f"separation {labels[i]}-{labels[j]}: {e}")
        if i in resamples and j in resamples:
            result = _bca_result(TestKind.OVERLAP, *_overlap_replicates(resamples[i], resamples[j]), config.alpha_level)
            first[i][j] = replace(result, classes=names)

    K = len(pairs)
    second: list[list[Cell]] = [[None] * K for _ in range(K)]
    for a, pair_a in enumerate(pairs):
        if not all(k in resamples for k in pair_a):
            continue
        i, j = pair_a
        result = _bca_result(TestKind.RADIUS_DIFF, *_radius_diff_replicates(resamples[i], resamples[j]), config.alpha_level)
        second[a][a] = replace(result, classes=(labels[i], labels[j]))
        for b in range(a + 1, K):
            pair_b = pairs[b]
            if not all(k in resamples for k in pair_b):
                continue
            names = tuple(labels[k] for k in (*pair_a, *pair_b))
            sep = _diff_from_resamples(TestKind.SEPARATION_DIFF, resamples, pair_a, pair_b, config.alpha_level)
            ovl = _diff_from_resamples(TestKind.OVERLAP_DIFF, resamples, pair_a, pair_b, config.alpha_level)
            second[b][a] = replace(sep, classes=names)
            second[a][b] = replace(ovl, classes=names)

    for kind in (TestKind.SEPARATION, TestKind.OVERLAP):
        _apply_fdr(first, kind, config.alpha_level)
    for kind in (TestKind.RADIUS_DIFF, TestKind.SEPARATION_DIFF, TestKind.OVERLAP_DIFF):
        _apply_fdr(second, kind, config.alpha_level)

    return InferenceReport(labels, pairs, first, second, config.alpha_level, config.n_resamples, config.seed, errors)
