import math

import numpy as np
import pytest
from scipy.spatial.distance import cdist

from h2s.embedding import (
    Embedding,
    ObjectiveWeights,
    build_embedding,
    gradient,
    mds_init,
    mds_only_embedding,
    objective,
    optimize,
)
from h2s.errors import ValidationError
from h2s.geometry import SummaryStats


def random_target(rng: np.random.Generator, T: int, N: int = 10) -> SummaryStats:
    centers = rng.normal(size=(T, N))
    radii = rng.uniform(0.1, 2.0, size=T)
    return SummaryStats(tuple(f"c{k}" for k in range(T)), radii, cdist(centers, centers))


def orthogonal_triads(radius: float = 0.3) -> SummaryStats:
    """Two equilateral triangles in orthogonal planes: sides sqrt(3), cross distances sqrt(2)."""
    angles = np.arange(3) * 2 * math.pi / 3
    circle = np.column_stack([np.cos(angles), np.sin(angles)])
    centers = np.zeros((6, 4))
    centers[:3, :2] = circle
    centers[3:, 2:] = circle
    return SummaryStats(tuple("abcdef"), np.full(6, radius), cdist(centers, centers))


class TestObjective:
    def test_zero_at_target(self) -> None:
        centers = np.array([[0.0, 0.0], [3.0, 0.0], [0.0, 4.0]])
        target = SummaryStats(("a", "b", "c"), np.array([1.0, 0.5, 2.0]), cdist(centers, centers))
        assert objective(centers, target.radii, target) == pytest.approx(0.0, abs=1e-24)

    def test_known_value(self) -> None:
        target = SummaryStats(("a", "b"), np.array([1.0, 1.0]), np.array([[0, 3.0], [3.0, 0]]))
        centers = np.array([[0.0, 0.0], [2.0, 0.0]])
        # distance off by 1, margin off by 1, radii exact
        assert objective(centers, np.ones(2), target, ObjectiveWeights(alpha=2.0, beta=5.0)) == pytest.approx(3.0)

    def test_radius_term(self) -> None:
        target = SummaryStats(("a",), np.array([2.0]), np.zeros((1, 1)))
        assert objective(np.zeros((1, 2)), np.array([1.0]), target, ObjectiveWeights(beta=3.0)) == pytest.approx(3.0)

    def test_rejects_negative_weights(self) -> None:
        with pytest.raises(ValidationError):
            ObjectiveWeights(alpha=-1.0)


class TestGradient:
    def test_matches_central_differences(self) -> None:
        rng = np.random.default_rng(0)
        h = 1e-5
        for trial in range(100):
            T = int(rng.choice([5, 6, 8]))
            n = int(rng.choice([2, 3]))
            target = random_target(rng, T)
            weights = ObjectiveWeights(float(rng.uniform(0, 3)), float(rng.uniform(0, 3)))
            centers = rng.normal(size=(T, n))
            radii = rng.uniform(0.1, 2.0, size=T)

            g_c, g_r = gradient(centers, radii, target, weights)
            analytic = np.concatenate([g_c.ravel(), g_r])
            x = np.concatenate([centers.ravel(), radii])
            numeric = np.empty_like(x)
            for k in range(x.size):
                up, down = x.copy(), x.copy()
                up[k] += h
                down[k] -= h
                f_up = objective(up[: T * n].reshape(T, n), up[T * n :], target, weights)
                f_down = objective(down[: T * n].reshape(T, n), down[T * n :], target, weights)
                numeric[k] = (f_up - f_down) / (2 * h)
            assert np.linalg.norm(analytic - numeric) / np.linalg.norm(numeric) < 1e-5, trial

    def test_coincident_centers_are_finite(self) -> None:
        target = SummaryStats(("a", "b"), np.ones(2), np.array([[0, 2.0], [2.0, 0]]))
        g_c, g_r = gradient(np.zeros((2, 2)), np.ones(2), target)
        assert np.all(np.isfinite(g_c))
        # equal and opposite pushes along the first axis
        np.testing.assert_allclose(g_c[0], -g_c[1])
        assert g_c[0, 0] != 0.0


class TestMds:
    def test_recovers_planar_distances(self) -> None:
        points = np.array([[0.0, 0.0], [3.0, 0.0], [0.0, 4.0], [3.0, 4.0]])
        target = SummaryStats(tuple("abcd"), np.ones(4), cdist(points, points))
        X = mds_init(target, 2)
        np.testing.assert_allclose(cdist(X, X), target.distances, atol=1e-8)
        np.testing.assert_allclose(X.mean(axis=0), 0.0, atol=1e-12)

    def test_single_class_at_origin(self) -> None:
        target = SummaryStats(("a",), np.array([1.5]), np.zeros((1, 1)))
        np.testing.assert_array_equal(mds_init(target, 3), np.zeros((1, 3)))

    @pytest.mark.parametrize("n", [1, 4])
    def test_rejects_unsupported_dims(self, n: int) -> None:
        target = SummaryStats(("a", "b"), np.ones(2), np.array([[0, 1.0], [1.0, 0]]))
        with pytest.raises(ValidationError, match="2 or 3"):
            mds_init(target, n)


class TestOptimize:
    @pytest.mark.parametrize(("T", "n"), [pytest.param(3, 2, id="T3_2d"), pytest.param(4, 3, id="T4_3d")])
    def test_perfect_embedding(self, T: int, n: int) -> None:
        rng = np.random.default_rng(T * 10 + n)
        for _ in range(100):
            embedding = optimize(random_target(rng, T), n, workers=1)
            assert embedding.max_relative_error <= 1e-6
            assert embedding.converged

    def test_perfect_case_error_is_tiny(self) -> None:
        target = random_target(np.random.default_rng(5), 3)
        embedding = optimize(target, 2)
        assert embedding.objective <= 1e-12 * target.scale**2

    def test_orthogonal_triads_cannot_be_embedded(self) -> None:
        target = orthogonal_triads()
        for n in (2, 3):
            embedding = optimize(target, n, seed=1)
            assert embedding.objective > 1e-4
            assert embedding.objective <= mds_only_embedding(target, n).objective * (1 + 1e-9)

    def test_deterministic_across_worker_counts(self) -> None:
        target = orthogonal_triads()
        a = optimize(target, 2, seed=4, workers=1)
        b = optimize(target, 2, seed=4, workers=4)
        np.testing.assert_array_equal(a.centers, b.centers)
        np.testing.assert_array_equal(a.radii, b.radii)

    def test_radii_nonnegative(self) -> None:
        target = SummaryStats(
            ("a", "b", "c", "d"),
            np.array([0.0, 0.0, 5.0, 0.01]),
            np.array([[0, 1, 1, 9], [1, 0, 1, 1], [1, 1, 0, 1], [9, 1, 1, 0]], dtype=float),
        )
        embedding = optimize(target, 2)
        assert np.all(embedding.radii >= 0)

    def test_single_class(self) -> None:
        target = SummaryStats(("a",), np.array([2.0]), np.zeros((1, 1)))
        embedding = optimize(target, 2)
        np.testing.assert_array_equal(embedding.centers, np.zeros((1, 2)))
        assert embedding.radii[0] == pytest.approx(2.0)

    def test_scale_invariance(self) -> None:
        target = orthogonal_triads()
        scaled = SummaryStats(target.labels, 1e4 * target.radii, 1e4 * target.distances)
        a = optimize(target, 2, seed=2)
        b = optimize(scaled, 2, seed=2)
        assert b.objective == pytest.approx(1e8 * a.objective, rel=1e-6)

    def test_rejects_bad_starts(self) -> None:
        with pytest.raises(ValidationError):
            optimize(orthogonal_triads(), 2, starts=0)


class TestInvariants:
    def test_objective_and_gradient_ignore_rigid_motion(self) -> None:
        rng = np.random.default_rng(6)
        target = random_target(rng, 5)
        weights = ObjectiveWeights(0.7, 1.3)
        centers = rng.normal(size=(5, 3))
        radii = rng.uniform(0.1, 1.0, size=5)
        Q, R = np.linalg.qr(rng.normal(size=(3, 3)))
        Q = Q * np.sign(np.diag(R))
        moved = centers @ Q.T + np.array([4.0, -1.0, 2.5])

        assert objective(moved, radii, target, weights) == pytest.approx(objective(centers, radii, target, weights), rel=1e-12)
        g_c, g_r = gradient(centers, radii, target, weights)
        moved_c, moved_r = gradient(moved, radii, target, weights)
        np.testing.assert_allclose(moved_c, g_c @ Q.T, atol=1e-10)
        np.testing.assert_allclose(moved_r, g_r, atol=1e-10)

    def test_regular_simplex_does_not_fit_in_the_plane(self) -> None:
        target = SummaryStats(tuple("abcd"), np.full(4, 0.3), cdist(np.eye(4), np.eye(4)))
        assert optimize(target, 2).objective > 1e-3
        assert optimize(target, 3).objective < 1e-12

    def test_stiff_radii_reduce_to_mds(self) -> None:
        target = random_target(np.random.default_rng(9), 5)
        weights = ObjectiveWeights(beta=1e8)
        fitted = optimize(target, 2, weights, starts=1)
        mds = mds_only_embedding(target, 2, weights)
        np.testing.assert_allclose(fitted.radii, mds.radii, atol=1e-4 * target.scale)
        np.testing.assert_allclose(fitted.achieved.distances, mds.achieved.distances, atol=1e-4 * target.scale)
        assert fitted.objective <= mds.objective * (1 + 1e-6)


def test_mds_only_copies_radii() -> None:
    target = orthogonal_triads(radius=0.7)
    embedding = mds_only_embedding(target, 2)
    assert embedding.method == "mds"
    np.testing.assert_array_equal(embedding.radii, target.radii)


def test_round_trip() -> None:
    embedding = optimize(orthogonal_triads(), 3, seed=0)
    back = Embedding.from_dict(embedding.to_dict())
    assert back.objective == pytest.approx(embedding.objective)
    assert back.converged == embedding.converged
    np.testing.assert_array_equal(back.centers, embedding.centers)


def test_build_embedding_rejects_nan() -> None:
    target = SummaryStats(("a", "b"), np.ones(2), np.array([[0, 1.0], [1.0, 0]]))
    with pytest.raises(ValidationError, match="non-finite"):
        build_embedding(target, np.array([[0.0, np.nan], [1.0, 0.0]]), np.ones(2), ObjectiveWeights())
