"""Low-dimensional sphere embedding matching high-dimensional summary statistics."""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.spatial.distance import cdist

from .errors import ValidationError
from .geometry import SummaryStats
from .workers import parallel_map

logger = logging.getLogger(__name__)

SUPPORTED_DIMS = (2, 3)
DEFAULT_STARTS = 8
JITTER_FRACTION = 0.05
MAX_ITER = 10_000
GRAD_TOL = 1e-8
SMACOF_TOL = 1e-10
PERFECT_TOL = 1e-12
STATIONARY_TOL = 1e-6


@dataclass(frozen=True)
class ObjectiveWeights:
    alpha: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        for name in ("alpha", "beta"):
            value = float(getattr(self, name))
            if not np.isfinite(value) or value < 0:
                raise ValidationError(f"{name} must be finite and >= 0, got {value}")
            object.__setattr__(self, name, value)

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "beta": self.beta}


@dataclass(frozen=True)
class ErrorReport:
    """Visualized minus target statistics."""

    distance_errors: np.ndarray
    margin_errors: np.ndarray
    radius_errors: np.ndarray

    @classmethod
    def between(cls, achieved: SummaryStats, target: SummaryStats) -> "ErrorReport":
        return cls(
            achieved.distances - target.distances,
            achieved.margins - target.margins,
            achieved.radii - target.radii,
        )

    def max_abs_error(self) -> float:
        return float(
            max(np.max(np.abs(self.distance_errors)), np.max(np.abs(self.margin_errors)), np.max(np.abs(self.radius_errors)))
        )

    def to_dict(self) -> dict:
        return {
            "distance_errors": self.distance_errors.tolist(),
            "margin_errors": self.margin_errors.tolist(),
            "radius_errors": self.radius_errors.tolist(),
        }


@dataclass(frozen=True)
class Embedding:
    labels: tuple[str, ...]
    dim: int
    centers: np.ndarray
    radii: np.ndarray
    target: SummaryStats
    achieved: SummaryStats
    errors: ErrorReport
    objective: float
    converged: bool
    weights: ObjectiveWeights
    method: str = "optimize"

    @property
    def max_relative_error(self) -> float:
        """Largest absolute statistic error relative to the target's length scale."""
        return self.errors.max_abs_error() / self.target.scale

    def to_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "dim": self.dim,
            "centers": self.centers.tolist(),
            "radii": self.radii.tolist(),
            "target": self.target.to_dict(),
            "achieved": self.achieved.to_dict(),
            "errors": self.errors.to_dict(),
            "objective": self.objective,
            "converged": self.converged,
            "weights": self.weights.to_dict(),
            "method": self.method,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Embedding":
        target = SummaryStats.from_dict(data["target"])
        weights = ObjectiveWeights(**data["weights"])
        return build_embedding(
            target,
            np.asarray(data["centers"], dtype=float),
            np.asarray(data["radii"], dtype=float),
            weights,
            converged=bool(data["converged"]),
            method=data.get("method", "optimize"),
        )


def _check_dim(n: int):
    if n not in SUPPORTED_DIMS:
        raise ValidationError(f"embedding dimension must be 2 or 3, got {n}")


def _pair_terms(centers: np.ndarray, radii: np.ndarray, target: SummaryStats):
    diff = centers[:, None, :] - centers[None, :, :]
    dist = np.sqrt(np.sum(diff**2, axis=2))
    margins = dist - radii[:, None] - radii[None, :]
    distance_err = dist - target.distances
    margin_err = margins - target.margins
    np.fill_diagonal(distance_err, 0.0)
    np.fill_diagonal(margin_err, 0.0)
    return diff, dist, distance_err, margin_err


def objective(centers: np.ndarray, radii: np.ndarray, target: SummaryStats, weights: ObjectiveWeights = ObjectiveWeights()) -> float:
    """E = sum_{i<j} (d~ - d^)^2 + alpha (m~ - m^)^2, plus beta sum_i (r~ - r^)^2."""
    centers = np.asarray(centers, dtype=float)
    radii = np.asarray(radii, dtype=float)
    _, _, distance_err, margin_err = _pair_terms(centers, radii, target)
    pair_sum = 0.5 * np.sum(distance_err**2 + weights.alpha * margin_err**2)
    return float(pair_sum + weights.beta * np.sum((radii - target.radii) ** 2))


def gradient(
    centers: np.ndarray, radii: np.ndarray, target: SummaryStats, weights: ObjectiveWeights = ObjectiveWeights()
) -> tuple[np.ndarray, np.ndarray]:
    """Analytic gradient of ``objective`` with respect to centers and radii.

    Coincident centers take the first coordinate axis as their direction, with
    opposite signs for the two members of the pair.

    Returns:
        (T x n center gradient, T radius gradient)
    """
    centers = np.asarray(centers, dtype=float)
    radii = np.asarray(radii, dtype=float)
    T, n = centers.shape
    diff, dist, distance_err, margin_err = _pair_terms(centers, radii, target)

    coincident = dist == 0.0
    np.fill_diagonal(coincident, False)
    safe = np.where(dist > 0.0, dist, 1.0)
    units = diff / safe[:, :, None]
    if np.any(coincident):
        axis = np.zeros(n)
        axis[0] = 1.0
        upper = np.triu(coincident, k=1)
        units[upper] = axis
        units[upper.T] = -axis

    coef = 2.0 * distance_err + 2.0 * weights.alpha * margin_err
    grad_centers = np.einsum("ij,ijk->ik", coef, units)
    grad_radii = 2.0 * weights.beta * (radii - target.radii) - 2.0 * weights.alpha * np.sum(margin_err, axis=1)
    return grad_centers, grad_radii


def _sign_convention(centers: np.ndarray) -> np.ndarray:
    centers = centers - centers.mean(axis=0)
    for k in range(centers.shape[1]):
        col = centers[:, k]
        pivot = int(np.argmax(np.abs(col)))
        if col[pivot] < 0:
            centers[:, k] = -col
    return centers


def _classical_scaling(D: np.ndarray, n: int) -> np.ndarray:
    T = D.shape[0]
    H = np.eye(T) - np.ones((T, T)) / T
    B = -0.5 * H @ (D**2) @ H
    evals, evecs = np.linalg.eigh(B)
    order = np.argsort(evals)[::-1][:n]
    evals = np.clip(evals[order], 0.0, None)
    X = evecs[:, order] * np.sqrt(evals)
    if X.shape[1] < n:
        X = np.hstack([X, np.zeros((T, n - X.shape[1]))])
    return X


def mds_init(target: SummaryStats, n: int = 2, max_iter: int = MAX_ITER) -> np.ndarray:
    """Metric-stress MDS of the target center distances.

    Classical scaling gives the starting configuration; SMACOF (Guttman
    transform with unit weights) then refines it until the stress gradient
    falls below ``SMACOF_TOL`` times the target scale.

    Returns:
        T x n centers, centered on the origin.
    """
    _check_dim(n)
    T = target.n_classes
    if T == 1:
        return np.zeros((1, n))

    D = np.asarray(target.distances)
    scale = target.scale
    X = _classical_scaling(D, n)

    for iteration in range(max_iter):
        current = cdist(X, X)
        ratio = np.divide(D, current, out=np.zeros_like(D), where=current > 0)
        B = -ratio
        np.fill_diagonal(B, 0.0)
        np.fill_diagonal(B, -B.sum(axis=1))
        X_new = B @ X / T
        step = np.linalg.norm(X_new - X)
        X = X_new
        # stress gradient of a centered configuration is 2T(X - B X / T)
        if 2.0 * T * step < SMACOF_TOL * scale:
            break
    else:
        logger.debug(f"SMACOF hit the iteration cap ({max_iter})")

    return _sign_convention(X)


def _pack(centers: np.ndarray, radii: np.ndarray) -> np.ndarray:
    return np.concatenate([centers.ravel(), radii])


def _unpack(x: np.ndarray, T: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    return x[: T * n].reshape(T, n), x[T * n :]


def build_embedding(
    target: SummaryStats,
    centers: np.ndarray,
    radii: np.ndarray,
    weights: ObjectiveWeights,
    converged: bool = True,
    method: str = "optimize",
) -> Embedding:
    """Assemble an Embedding with achieved statistics and error report."""
    centers = np.asarray(centers, dtype=float)
    radii = np.asarray(radii, dtype=float)
    if not (np.all(np.isfinite(centers)) and np.all(np.isfinite(radii))):
        raise ValidationError("embedding has non-finite centers or radii")
    T, n = centers.shape
    _check_dim(n)
    if T != target.n_classes:
        raise ValidationError(f"{T} embedded spheres for {target.n_classes} target classes")
    achieved = SummaryStats(target.labels, radii, cdist(centers, centers))
    return Embedding(
        labels=target.labels,
        dim=n,
        centers=centers,
        radii=radii,
        target=target,
        achieved=achieved,
        errors=ErrorReport.between(achieved, target),
        objective=objective(centers, radii, target, weights),
        converged=converged,
        weights=weights,
        method=method,
    )


def _normalized(target: SummaryStats) -> SummaryStats:
    scale = target.scale
    return SummaryStats(target.labels, target.radii / scale, target.distances / scale)


def _descend(x0: np.ndarray, target: SummaryStats, weights: ObjectiveWeights, n: int):
    T = target.n_classes

    def fun(x):
        centers, radii = _unpack(x, T, n)
        g_c, g_r = gradient(centers, radii, target, weights)
        return objective(centers, radii, target, weights), _pack(g_c, g_r)

    bounds = [(None, None)] * (T * n) + [(0.0, None)] * T
    return minimize(
        fun,
        x0,
        jac=True,
        method="L-BFGS-B",
        bounds=bounds,
        options={"maxiter": MAX_ITER, "gtol": GRAD_TOL, "ftol": 1e-15},
    )


def _stationary(result, T: int, n: int) -> bool:
    """L-BFGS-B success, or a projected gradient below STATIONARY_TOL.

    A line-search stop at the optimum is reported as a failure by scipy.
    """
    if result.success:
        return True
    grad = np.array(result.jac, dtype=float)
    _, radii = _unpack(result.x, T, n)
    at_bound = np.concatenate([np.zeros(T * n, dtype=bool), radii <= 0.0])
    grad[at_bound & (grad > 0.0)] = 0.0
    return bool(np.max(np.abs(grad)) <= STATIONARY_TOL)


def optimize(
    target: SummaryStats,
    n: int = 2,
    weights: ObjectiveWeights = ObjectiveWeights(),
    seed: int = 0,
    starts: int = DEFAULT_STARTS,
    workers: int | None = None,
) -> Embedding:
    """Fit n-dimensional centers and radii to the target statistics.

    Radii start at the target radii and centers at the MDS solution. When
    T <= n + 1 the start is already exact and is returned as is. Otherwise
    L-BFGS-B (radii bounded below by 0) runs from the MDS start and from
    ``starts - 1`` jittered copies of it; the lowest objective wins.

    Args:
        target: High-dimensional summary statistics.
        n: Embedding dimension, 2 or 3.
        weights: Margin and radius weights.
        seed: Seed for the jittered starts.
        starts: Number of starts, including the unjittered one.
        workers: Thread cap for running starts concurrently.

    Returns:
        Embedding in the target's length units.
    """
    _check_dim(n)
    if starts < 1:
        raise ValidationError(f"starts must be positive, got {starts}")
    T = target.n_classes
    scale = target.scale
    unit = _normalized(target)

    init = mds_init(unit, n)
    radii0 = unit.radii.copy()
    E0 = objective(init, radii0, unit, weights)
    if T <= n + 1 and E0 <= PERFECT_TOL:
        logger.info(f"Exact embedding of {T} classes in {n}D (E={E0 * scale**2:.3g})")
        return build_embedding(target, init * scale, radii0 * scale, weights, converged=True)

    def run_start(k: int):
        centers = init
        if k > 0:
            rng = np.random.default_rng([seed, k])
            centers = init + rng.normal(0.0, JITTER_FRACTION, size=init.shape)
        result = _descend(_pack(centers, radii0), unit, weights, n)
        logger.debug(f"Start {k}: E={result.fun:.6g} after {result.nit} iterations ({result.message})")
        return result

    results = parallel_map(run_start, range(starts), workers)
    best = min(results, key=lambda res: res.fun)
    centers, radii = _unpack(best.x, T, n)
    centers = _sign_convention(centers) * scale
    radii = np.clip(radii, 0.0, None) * scale

    embedding = build_embedding(target, centers, radii, weights, converged=_stationary(best, T, n))
    if not embedding.converged:
        logger.warning(f"Embedding optimizer did not converge ({best.message}); returning best iterate")
    logger.info(f"Embedded {T} classes in {n}D: E={embedding.objective:.6g} (from MDS start {E0 * scale**2:.6g})")
    return embedding


def mds_only_embedding(target: SummaryStats, n: int = 2, weights: ObjectiveWeights = ObjectiveWeights()) -> Embedding:
    """MDS centers with radii copied from the target."""
    centers = mds_init(_normalized(target), n) * target.scale
    return build_embedding(target, centers, target.radii.copy(), weights, converged=True, method="mds")
