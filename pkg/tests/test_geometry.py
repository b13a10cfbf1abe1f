import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from h2s.errors import ValidationError
from h2s.geometry import (
    DistanceDataset,
    Hypersphere,
    HypersphereEnsemble,
    LabeledDataset,
    SummaryStats,
    d2c,
    summary_stats,
)


class TestLabeledDataset:
    def test_infers_dimension(self) -> None:
        ds = LabeledDataset.from_mapping({"a": [[0, 0], [1, 1]], "b": [[2, 2], [3, 3]]})
        assert ds.n_classes == 2
        assert ds.dimension == 2
        np.testing.assert_array_equal(ds.class_points("b"), [[2, 2], [3, 3]])

    def test_points_are_read_only(self) -> None:
        ds = LabeledDataset(("a",), (np.zeros((3, 2)),))
        with pytest.raises(ValueError):
            ds.points[0][0, 0] = 1.0

    @pytest.mark.parametrize(
        ("labels", "points"),
        [
            pytest.param(("a",), (np.zeros((1, 2)),), id="single_point"),
            pytest.param(("a", "b"), (np.zeros((2, 2)), np.zeros((2, 3))), id="dimension_mismatch"),
            pytest.param(("a", "a"), (np.zeros((2, 2)), np.zeros((2, 2))), id="duplicate_label"),
            pytest.param(("a",), (np.array([[0.0, np.nan], [1.0, 1.0]]),), id="nan"),
            pytest.param((), (), id="empty"),
        ],
    )
    def test_rejects_invalid(self, labels, points) -> None:
        with pytest.raises(ValidationError):
            LabeledDataset(labels, points)


class TestDistanceDataset:
    def test_blocks(self) -> None:
        D = np.array([[0, 1, 5, 5], [1, 0, 5, 5], [5, 5, 0, 2], [5, 5, 2, 0]], dtype=float)
        ds = DistanceDataset(("a", "a", "b", "b"), D, 3)
        assert ds.labels == ("a", "b")
        np.testing.assert_array_equal(ds.indices("b"), [2, 3])
        np.testing.assert_array_equal(ds.block("a", "b"), np.full((2, 2), 5.0))

    def test_rejects_asymmetric(self) -> None:
        D = np.array([[0, 1, 2], [1.5, 0, 1], [2, 1, 0]], dtype=float)
        with pytest.raises(ValidationError, match="symmetric"):
            DistanceDataset(("a", "a", "a"), D, 2)

    def test_rejects_singleton_class(self) -> None:
        D = np.array([[0, 1, 2], [1, 0, 1], [2, 1, 0]], dtype=float)
        with pytest.raises(ValidationError, match="'b'"):
            DistanceDataset(("a", "a", "b"), D, 2)


class TestHypersphere:
    def test_round_trip(self) -> None:
        sphere = Hypersphere(np.array([1.0, 2.0]), 0.5)
        back = Hypersphere.from_dict(sphere.to_dict())
        np.testing.assert_array_equal(back.center, sphere.center)
        assert back.radius == 0.5

    @pytest.mark.parametrize("radius", [-1.0, float("inf"), float("nan")])
    def test_rejects_bad_radius(self, radius: float) -> None:
        with pytest.raises(ValidationError):
            Hypersphere(np.zeros(2), radius)

    def test_ensemble_dimensions_must_agree(self) -> None:
        with pytest.raises(ValidationError):
            HypersphereEnsemble(("a", "b"), (Hypersphere(np.zeros(2), 1), Hypersphere(np.zeros(3), 1)))


class TestSummaryStats:
    def test_two_unit_spheres_at_distance_three(self) -> None:
        ens = HypersphereEnsemble(
            ("a", "b"), (Hypersphere(np.zeros(3), 1.0), Hypersphere(np.array([3.0, 0, 0]), 1.0))
        )
        stats = summary_stats(ens)
        assert stats.distances[0, 1] == pytest.approx(3.0)
        assert stats.margins[0, 1] == pytest.approx(1.0)
        assert stats.overlaps[0, 1] == pytest.approx(-1.0)

    def test_concentric_margin(self) -> None:
        ens = HypersphereEnsemble(("a", "b"), (Hypersphere(np.zeros(2), 1.0), Hypersphere(np.zeros(2), 0.5)))
        stats = summary_stats(ens)
        assert stats.margins[0, 1] == pytest.approx(-1.5)

    def test_scale(self) -> None:
        stats = SummaryStats(("a", "b", "c"), np.ones(3), np.array([[0, 2, 4], [2, 0, 6], [4, 6, 0]]))
        assert stats.scale == pytest.approx(4.0)
        assert SummaryStats(("a",), np.array([2.0]), np.zeros((1, 1))).scale == pytest.approx(2.0)
        assert SummaryStats(("a",), np.array([0.0]), np.zeros((1, 1))).scale == 1.0

    def test_round_trip(self) -> None:
        stats = SummaryStats(("a", "b"), np.array([1.0, 2.0]), np.array([[0, 4.0], [4.0, 0]]))
        back = SummaryStats.from_dict(stats.to_dict())
        np.testing.assert_array_equal(back.margins, stats.margins)
        assert back.labels == stats.labels

    def test_rejects_shape_mismatch(self) -> None:
        with pytest.raises(ValidationError):
            SummaryStats(("a", "b"), np.ones(2), np.zeros((3, 3)))

    @given(
        radii=arrays(np.float64, 4, elements=st.floats(0, 10)),
        centers=arrays(np.float64, (4, 3), elements=st.floats(-10, 10)),
    )
    def test_margins_are_symmetric(self, radii: np.ndarray, centers: np.ndarray) -> None:
        ens = HypersphereEnsemble(tuple("abcd"), tuple(Hypersphere(c, r) for c, r in zip(centers, radii)))
        stats = summary_stats(ens)
        np.testing.assert_array_equal(stats.margins, stats.margins.T)
        np.testing.assert_allclose(
            stats.margins + radii[:, None] + radii[None, :], stats.distances, atol=1e-9
        )


def test_d2c() -> None:
    np.testing.assert_allclose(d2c(np.array([[3.0, 4.0], [0.0, 0.0]]), np.zeros(2)), [5.0, 0.0])


def test_d2c_dimension_mismatch() -> None:
    with pytest.raises(ValidationError, match="dimension mismatch"):
        d2c(np.zeros((2, 3)), np.zeros(2))


def test_summary_stats_ignore_rigid_motion() -> None:
    rng = np.random.default_rng(8)
    centers = rng.normal(size=(5, 6))
    radii = rng.uniform(0.2, 2.0, size=5)
    Q, R = np.linalg.qr(rng.normal(size=(6, 6)))
    Q = Q * np.sign(np.diag(R))
    shift = rng.normal(size=6) * 10.0
    labels = tuple("vwxyz")
    before = summary_stats(HypersphereEnsemble(labels, tuple(Hypersphere(c, r) for c, r in zip(centers, radii))))
    moved = centers @ Q.T + shift
    after = summary_stats(HypersphereEnsemble(labels, tuple(Hypersphere(c, r) for c, r in zip(moved, radii))))
    np.testing.assert_allclose(after.distances, before.distances, atol=1e-12)
    np.testing.assert_allclose(after.margins, before.margins, atol=1e-12)
    np.testing.assert_array_equal(after.radii, before.radii)
