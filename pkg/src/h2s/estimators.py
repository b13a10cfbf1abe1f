"""Center and radius estimators for the enclosing hypersphere of one class.

Point-mode estimators work on a P x N matrix; the pairwise-distance estimator
works on the within-class distance matrix alone. ML and MCMC estimate center
and radius jointly; every other estimator takes the class mean as the center.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np
from scipy.spatial.distance import pdist, squareform
from scipy.special import gammaln

from .errors import ConvergenceError, ValidationError
from .geometry import DistanceDataset, Hypersphere, HypersphereEnsemble, LabeledDataset, SummaryStats, d2c
from .tables import DEFAULT_TABLES, CalibrationTables
from .workers import parallel_map

logger = logging.getLogger(__name__)


class Estimator(str, Enum):
    ML = "ML"
    MCMC = "MCMC"
    DCB1 = "DCB1"
    DCG = "DCG"
    DCC = "DCC"
    DCB2 = "DCB2"
    ADAPTIVE = "ADAPTIVE"
    DIST = "DIST"


POINTS_ONLY = frozenset(
    {Estimator.ML, Estimator.MCMC, Estimator.DCB1, Estimator.DCG, Estimator.DCC, Estimator.DCB2, Estimator.ADAPTIVE}
)

MEB_TOLERANCE = 1e-6
MEB_MAX_ITER = 10_000


@dataclass(frozen=True)
class EstimatorChoice:
    variant: Estimator = Estimator.ADAPTIVE
    mcmc_samples: int = 10_000
    seed: int = 0

    def __post_init__(self):
        try:
            variant = Estimator(str(getattr(self.variant, "value", self.variant)).upper())
        except ValueError:
            options = ", ".join(e.value for e in Estimator)
            raise ValidationError(f"unknown estimator {self.variant!r} (choose from {options})") from None
        if int(self.mcmc_samples) < 1:
            raise ValidationError(f"mcmc_samples must be positive, got {self.mcmc_samples}")
        object.__setattr__(self, "variant", variant)
        object.__setattr__(self, "mcmc_samples", int(self.mcmc_samples))


@dataclass(frozen=True)
class PosteriorSamples:
    centers: np.ndarray
    radii: np.ndarray
    log_likelihoods: np.ndarray
    acceptance_rate: float

    def __len__(self) -> int:
        return self.radii.shape[0]


def _as_points(points) -> np.ndarray:
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValidationError("expected a non-empty P x N point matrix")
    return X


def _is_degenerate(X: np.ndarray) -> bool:
    return bool(np.all(X == X[0]))


def _d2c_from_mean(X: np.ndarray) -> np.ndarray:
    return d2c(X, X.mean(axis=0))


def center_mean(points) -> np.ndarray:
    """Arithmetic mean of the rows."""
    return _as_points(points).mean(axis=0)


def _circumsphere(S: np.ndarray) -> tuple[np.ndarray, float] | None:
    """Center equidistant from all rows of S within their affine hull."""
    A = S[1:] - S[0]
    rhs = 0.5 * np.sum(A**2, axis=1)
    G = A @ A.T
    y, *_ = np.linalg.lstsq(G, rhs, rcond=None)
    center = S[0] + y @ A
    if not np.all(np.isfinite(center)):
        return None
    return center, float(np.max(np.linalg.norm(S - center, axis=1)))


def fit_ml_ball(points, tol: float = MEB_TOLERANCE, max_iter: int = MEB_MAX_ITER) -> Hypersphere:
    """Minimum enclosing ball (the ML fit of a uniform N-ball).

    Frank-Wolfe with away steps on the dual of the enclosing-ball problem.
    The dual value bounds the optimal squared radius from below, so stopping
    when the farthest point is within ``(1 + tol/10)`` of that bound leaves a
    relative radius error under ``tol``. The returned radius is always the
    maximum distance to the returned center, so the ball encloses every point.
    """
    X = _as_points(points)
    P = X.shape[0]
    if P == 1 or _is_degenerate(X):
        return Hypersphere(X[0], 0.0)

    a = int(np.argmax(np.sum((X - X[0]) ** 2, axis=1)))
    b = int(np.argmax(np.sum((X - X[a]) ** 2, axis=1)))
    u = np.zeros(P)
    u[a] += 0.5
    u[b] += 0.5

    eps = (1.0 + 0.1 * tol) ** 2 - 1.0
    converged = False
    for iteration in range(max_iter):
        c = u @ X
        dist2 = np.sum((X - c) ** 2, axis=1)
        gamma = float(u @ dist2)
        if gamma <= 0.0:
            break

        k = int(np.argmax(dist2))
        delta_plus = dist2[k] / gamma - 1.0
        support = np.flatnonzero(u > 0.0)
        j = int(support[np.argmin(dist2[support])])
        delta_minus = 1.0 - dist2[j] / gamma

        if max(delta_plus, delta_minus) <= eps:
            converged = True
            break

        if delta_plus >= delta_minus or u[j] >= 1.0:
            lam = delta_plus / (2.0 * (1.0 + delta_plus))
            u *= 1.0 - lam
            u[k] += lam
        else:
            lam = min(delta_minus / (2.0 * (1.0 - delta_minus)), u[j] / (1.0 - u[j]))
            u *= 1.0 + lam
            u[j] -= lam
            if u[j] < 1e-15:
                u[j] = 0.0

    center = u @ X
    radius = float(np.max(np.linalg.norm(X - center, axis=1)))

    # The support points sit on the boundary; their circumsphere is the exact
    # optimum whenever the support set has been identified.
    dist = np.linalg.norm(X - center, axis=1)
    boundary = X[(u > 0.0) & (dist >= radius * (1.0 - 1e-4))]
    if boundary.shape[0] >= 2:
        polished = _circumsphere(boundary)
        if polished is not None:
            p_center, _ = polished
            p_radius = float(np.max(np.linalg.norm(X - p_center, axis=1)))
            if p_radius < radius:
                center, radius = p_center, p_radius

    if not converged:
        logger.warning(f"Enclosing-ball iteration cap ({max_iter}) reached; returning best enclosing ball found")
    else:
        logger.debug(f"Enclosing ball converged after {iteration} iterations, radius {radius:.6g}")
    return Hypersphere(center, radius)


def log_unit_ball_volume(n: int) -> float:
    return 0.5 * n * math.log(math.pi) - float(gammaln(0.5 * n + 1.0))


def mcmc_fit(
    points,
    mcmc_samples: int = 10_000,
    seed: int | Sequence[int] = 0,
    burn_in_fraction: float = 0.2,
    target_acceptance: float = 0.23,
) -> tuple[PosteriorSamples, Hypersphere]:
    """Random-walk Metropolis over (center, radius) with flat improper priors.

    The likelihood of a uniform N-ball is ``-P log(r^N V1(N))`` when every
    point lies inside, and -inf otherwise. The chain starts at the ML ball
    inflated by 10%; during the first ``burn_in_fraction`` of iterations the
    Gaussian proposal scale is tuned toward ``target_acceptance``. The point
    estimate is the marginal median of radius and of each center coordinate.
    """
    X = _as_points(points)
    P, N = X.shape
    if P < 2:
        raise ValidationError("MCMC fit needs at least 2 points")

    ml = fit_ml_ball(X)
    if ml.radius == 0.0:
        samples = PosteriorSamples(ml.center[None, :].copy(), np.zeros(1), np.array([np.inf]), 1.0)
        return samples, ml

    rng = np.random.default_rng(seed)
    log_v1 = log_unit_ball_volume(N)

    def log_likelihood(c: np.ndarray, r: float) -> float:
        if r <= 0.0:
            return -np.inf
        if np.max(np.sum((X - c) ** 2, axis=1)) > r * r:
            return -np.inf
        return -P * (N * math.log(r) + log_v1)

    c = ml.center.copy()
    r = 1.1 * ml.radius
    ll = log_likelihood(c, r)
    step = 0.1 * ml.radius / P

    n_burn = int(burn_in_fraction * mcmc_samples)
    n_keep = max(1, mcmc_samples - n_burn)
    centers = np.empty((n_keep, N))
    radii = np.empty(n_keep)
    lls = np.empty(n_keep)

    window_accepts = 0
    kept_accepts = 0
    for it in range(n_burn + n_keep):
        c_new = c + step * rng.standard_normal(N)
        r_new = r + step * rng.standard_normal()
        ll_new = log_likelihood(c_new, r_new)
        if ll_new > -np.inf and math.log(rng.random()) < ll_new - ll:
            c, r, ll = c_new, r_new, ll_new
            window_accepts += 1
            if it >= n_burn:
                kept_accepts += 1

        if it < n_burn:
            if (it + 1) % 50 == 0:
                rate = window_accepts / 50
                step *= math.exp(2.0 * (rate - target_acceptance))
                window_accepts = 0
        else:
            k = it - n_burn
            centers[k] = c
            radii[k] = r
            lls[k] = ll

    acceptance = kept_accepts / n_keep
    samples = PosteriorSamples(centers, radii, lls, acceptance)
    if acceptance < 0.01:
        raise ConvergenceError(
            f"MCMC acceptance rate {acceptance:.4f} below 1% "
            f"(proposal scale {step:.3g}, ML radius {ml.radius:.6g}, P={P}, N={N})"
        )
    logger.debug(f"MCMC kept {n_keep} states, acceptance {acceptance:.3f}, proposal scale {step:.3g}")

    estimate = Hypersphere(np.median(centers, axis=0), float(np.median(radii)))
    return samples, estimate


def r_dcb1(points) -> float:
    """Maximum distance to the mean, inflated by (1 + P^-N)."""
    X = _as_points(points)
    P, N = X.shape
    return (1.0 + float(P) ** (-N)) * float(np.max(_d2c_from_mean(X)))


def gamma_fn(n: int) -> float:
    """Mean of the chi distribution with n degrees of freedom."""
    if n < 1:
        raise ValidationError(f"dimension must be positive, got {n}")
    return math.sqrt(2.0) * math.exp(float(gammaln((n + 1) / 2.0) - gammaln(n / 2.0)))


def r_dcg(points) -> float:
    """Gaussian assumption: per-coordinate standard deviation scaled by gamma(N)."""
    X = _as_points(points)
    P, N = X.shape
    if P < 2:
        raise ValidationError("DCG estimator needs at least 2 points")
    delta = _d2c_from_mean(X)
    return gamma_fn(N) * math.sqrt(float(np.sum(delta**2)) / (N * (P - 1)))


def r_dcc(points) -> float:
    """Hypercube assumption: median distance to the mean."""
    return float(np.median(_d2c_from_mean(_as_points(points))))


def _dcb2_from_delta(delta: np.ndarray, n: int, tables: CalibrationTables) -> float:
    spread = float(np.std(delta, ddof=1)) if delta.shape[0] > 1 else 0.0
    return float(np.median(delta)) + spread * tables.xi_at(n)


def r_dcb2(points, tables: CalibrationTables = DEFAULT_TABLES) -> float:
    """Ball assumption: median distance to the mean plus xi(N) standard deviations."""
    X = _as_points(points)
    return _dcb2_from_delta(_d2c_from_mean(X), X.shape[1], tables)


def adaptive_threshold(n: int) -> float:
    return 2.0 ** (-1.0 - (4.0 / 3.0) * math.log2(n))


def adaptive_criterion(points) -> tuple[float, float]:
    """Normalized distance-to-center variance and the Gaussian/ball threshold.

    Returns ``(variance, threshold)``; a variance above the threshold means the
    class looks Gaussian. The variance is 0 for a degenerate class.
    """
    X = _as_points(points)
    delta = _d2c_from_mean(X)
    median = float(np.median(delta))
    threshold = adaptive_threshold(X.shape[1])
    if median == 0.0:
        return 0.0, threshold
    return float(np.var(delta / median, ddof=1)), threshold


def r_adapt(points, tables: CalibrationTables = DEFAULT_TABLES) -> float:
    """DCG for Gaussian-looking classes, DCB2 otherwise."""
    X = _as_points(points)
    delta = _d2c_from_mean(X)
    median = float(np.median(delta))
    if median == 0.0:
        return 0.0
    variance = float(np.var(delta / median, ddof=1))
    if variance > adaptive_threshold(X.shape[1]):
        return r_dcg(X)
    return _dcb2_from_delta(delta, X.shape[1], tables)


def r_dist(distances, n: int, tables: CalibrationTables = DEFAULT_TABLES) -> float:
    """zeta(N) times the mean within-class pairwise distance.

    ``distances`` is either a square within-class matrix or a condensed vector.
    """
    D = np.asarray(distances, dtype=float)
    if D.ndim == 2:
        if D.shape[0] != D.shape[1]:
            raise ValidationError(f"within-class distance matrix must be square, got {D.shape}")
        if D.shape[0] < 2:
            raise ValidationError("pairwise-distance estimator needs at least 2 points")
        D = D[np.triu_indices(D.shape[0], k=1)]
    elif D.size < 1:
        raise ValidationError("pairwise-distance estimator needs at least 2 points")
    return float(np.mean(D)) / tables.inv_zeta_at(n)


def r_mean_d2c(points) -> float:
    """Mean distance to the mean; the naive baseline."""
    return float(np.mean(_d2c_from_mean(_as_points(points))))


def estimate_sphere(
    points,
    choice: EstimatorChoice = EstimatorChoice(),
    tables: CalibrationTables = DEFAULT_TABLES,
    seed: int | Sequence[int] | None = None,
) -> Hypersphere:
    """Fit one class with the chosen estimator.

    ``seed`` overrides ``choice.seed`` for the MCMC sampler.
    """
    X = _as_points(points)
    if _is_degenerate(X):
        return Hypersphere(X[0], 0.0)

    variant = choice.variant
    if variant is Estimator.ML:
        return fit_ml_ball(X)
    if variant is Estimator.MCMC:
        _, sphere = mcmc_fit(X, choice.mcmc_samples, choice.seed if seed is None else seed)
        return sphere

    center = X.mean(axis=0)
    if variant is Estimator.DCB1:
        radius = r_dcb1(X)
    elif variant is Estimator.DCG:
        radius = r_dcg(X)
    elif variant is Estimator.DCC:
        radius = r_dcc(X)
    elif variant is Estimator.DCB2:
        radius = r_dcb2(X, tables)
    elif variant is Estimator.ADAPTIVE:
        radius = r_adapt(X, tables)
    else:
        radius = r_dist(pdist(X), X.shape[1], tables)
    return Hypersphere(center, radius)


def _centroid_distances(dataset: DistanceDataset) -> np.ndarray:
    """Center distances from pairwise distances via the centroid identity.

    ||c_i - c_j||^2 = mean cross squared distance
                      - (mean within-i + mean within-j squared distance) / 2
    where the within-class means run over all ordered pairs, diagonal included.
    """
    labels = dataset.labels
    T = len(labels)
    within = np.array([np.mean(dataset.block(label, label) ** 2) for label in labels])
    d2 = np.zeros((T, T))
    for i in range(T):
        for j in range(i + 1, T):
            cross = float(np.mean(dataset.block(labels[i], labels[j]) ** 2))
            d2[i, j] = d2[j, i] = cross - 0.5 * (within[i] + within[j])
    clipped = d2 < 0
    if np.any(clipped):
        logger.warning(f"Clipped {int(np.sum(clipped)) // 2} negative squared center distance(s) to 0")
    return np.sqrt(np.clip(d2, 0.0, None))


def fit_ensemble(
    dataset: LabeledDataset | DistanceDataset,
    choice: EstimatorChoice = EstimatorChoice(),
    tables: CalibrationTables = DEFAULT_TABLES,
    workers: int | None = None,
) -> tuple[HypersphereEnsemble | None, SummaryStats]:
    """Fit one hypersphere per class and compute the summary statistics.

    Distance datasets yield statistics only (no center coordinates exist), so
    the ensemble is None in that mode.
    """
    if isinstance(dataset, DistanceDataset):
        if choice.variant in POINTS_ONLY:
            raise ValidationError(
                f"estimator {choice.variant.value} needs point coordinates; use DIST for distance-matrix input"
            )
        radii = np.array([r_dist(dataset.block(label, label), dataset.dimension, tables) for label in dataset.labels])
        stats = SummaryStats(dataset.labels, radii, _centroid_distances(dataset))
        logger.info(f"Fitted {dataset.n_classes} classes from pairwise distances (N={dataset.dimension})")
        return None, stats

    def fit_class(index: int) -> Hypersphere:
        return estimate_sphere(dataset.points[index], choice, tables, seed=[choice.seed, index])

    spheres = parallel_map(fit_class, range(dataset.n_classes), workers)
    ensemble = HypersphereEnsemble(dataset.labels, tuple(spheres))
    centers = ensemble.centers
    stats = SummaryStats(ensemble.labels, ensemble.radii, squareform(pdist(centers)) if len(spheres) > 1 else np.zeros((1, 1)))
    logger.info(
        f"Fitted {dataset.n_classes} classes with {choice.variant.value} "
        f"(N={dataset.dimension}, radii {np.round(ensemble.radii, 4).tolist()})"
    )
    return ensemble, stats
