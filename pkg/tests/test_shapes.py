import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import bridgemark as bm
from bridgemark.errors import AlignmentError, DomainError
from bridgemark.shapes import procrustes_residual

EXP_HALF = 0.6065306597126334  # exp(-0.5), direct evaluation of the kernel formula


class TestKernelEval:
    def test_zero_distance_unit_variance(self):
        assert bm.kernel_eval((0, 0), (0, 0), bm.KernelSpec(1, 1)) == 1.0

    def test_zero_distance_sqrt_variance(self):
        assert bm.kernel_eval((0, 0), (0, 0), bm.KernelSpec(4, 1)) == 2.0

    def test_unit_distance(self):
        value = bm.kernel_eval((1, 0), (0, 0), bm.KernelSpec(1, 1))
        assert value == pytest.approx(EXP_HALF, abs=1e-12)

    def test_rejects_non_finite(self):
        with pytest.raises(DomainError):
            bm.kernel_eval((np.nan, 0), (0, 0), bm.KernelSpec(1, 1))

    def test_rejects_dimension_mismatch(self):
        with pytest.raises(DomainError):
            bm.kernel_eval((1, 0, 0), (0, 0), bm.KernelSpec(1, 1))

    @given(st.lists(st.floats(-5, 5), min_size=2, max_size=2),
           st.lists(st.floats(-5, 5), min_size=2, max_size=2))
    def test_symmetric(self, x, y):
        spec = bm.KernelSpec(2.0, 0.7)
        assert bm.kernel_eval(x, y, spec) == bm.kernel_eval(y, x, spec)

    def test_value_range(self):
        # in float64 the kernel underflows to exactly 0 beyond ~19
        # lengthscales; check positivity on the representable range
        spec = bm.KernelSpec(3.0, 0.5)
        for offset in [0.0, 0.1, 2.0, 9.0]:
            val = bm.kernel_eval((offset, 0), (0, 0), spec)
            assert 0 < val <= np.sqrt(3.0)


class TestBuildSigma:
    def test_single_landmark_identity(self):
        shape = bm.LandmarkShape(np.zeros((1, 2)))
        np.testing.assert_array_equal(
            bm.build_sigma(shape, bm.KernelSpec(1, 1)), np.eye(2))

    def test_coincident_landmarks_rank_deficient(self):
        shape = bm.LandmarkShape(np.zeros((2, 2)))
        sigma = bm.build_sigma(shape, bm.KernelSpec(1, 1))
        np.testing.assert_array_equal(sigma, np.kron(np.ones((2, 2)), np.eye(2)))
        assert np.linalg.matrix_rank(sigma) == 2

    def test_unit_distance_off_diagonal_blocks(self):
        shape = bm.LandmarkShape(np.array([[0.0, 0.0], [1.0, 0.0]]))
        sigma = bm.build_sigma(shape, bm.KernelSpec(1, 1))
        np.testing.assert_allclose(sigma[:2, 2:], EXP_HALF * np.eye(2), atol=1e-12)
        np.testing.assert_allclose(sigma[2:, :2], EXP_HALF * np.eye(2), atol=1e-12)
        np.testing.assert_array_equal(sigma[:2, :2], np.eye(2))

    @given(st.integers(0, 10_000), st.integers(1, 20))
    @settings(max_examples=40)
    def test_positive_semidefinite(self, seed, n):
        rng = np.random.default_rng(seed)
        shape = bm.LandmarkShape(rng.normal(size=(n, 2)))
        sigma = bm.build_sigma(shape, bm.KernelSpec(1.5, 0.6))
        assert sigma.shape == (2 * n, 2 * n)
        np.testing.assert_array_equal(sigma, sigma.T)
        assert np.linalg.eigvalsh(sigma).min() >= -1e-10

    def test_short_lengthscale_approaches_diagonal(self):
        # min pairwise distance 1.0 with kappa = 0.05 < 1/10
        shape = bm.LandmarkShape(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]))
        sigma = bm.build_sigma(shape, bm.KernelSpec(2.0, 0.05))
        off = sigma - np.sqrt(2.0) * np.eye(6)
        assert np.abs(off).max() < 1e-8


class TestProcrustes:
    def test_identity_alignment(self):
        ref = bm.synth_shape("ellipse", 30, {"a": 2, "b": 1})
        aligned = bm.procrustes_align(ref, ref)
        assert procrustes_residual(ref, aligned) <= 1e-20

    def test_recovers_similarity_transform(self):
        ref = bm.synth_shape("blob", 25, seed=4)
        rot = np.array([[0.0, -1.0], [1.0, 0.0]])   # 90 degrees
        target = bm.LandmarkShape(3.0 * ref.points @ rot.T + np.array([5.0, -2.0]))
        aligned = bm.procrustes_align(ref, target)
        assert procrustes_residual(ref, aligned) <= 1e-10

    def test_noisy_ellipses_residual_shrinks(self):
        rng = np.random.default_rng(0)
        ref = bm.synth_shape("ellipse", 40, {"a": 2, "b": 1})
        angle = 0.7
        rot = np.array([[np.cos(angle), -np.sin(angle)],
                        [np.sin(angle), np.cos(angle)]])
        tgt = bm.LandmarkShape(1.8 * (ref.points + 0.05 * rng.normal(size=ref.points.shape))
                               @ rot.T + 1.5)
        aligned = bm.procrustes_align(ref, tgt)
        assert procrustes_residual(ref, aligned) < procrustes_residual(ref, tgt)

    def test_idempotent(self):
        rng = np.random.default_rng(3)
        ref = bm.LandmarkShape(rng.normal(size=(12, 2)))
        tgt = bm.LandmarkShape(rng.normal(size=(12, 2)))
        once = bm.procrustes_align(ref, tgt)
        twice = bm.procrustes_align(ref, once)
        assert np.abs(once.points - twice.points).max() <= 1e-10

    def test_degenerate_target(self):
        ref = bm.synth_shape("circle", 5)
        with pytest.raises(AlignmentError):
            bm.procrustes_align(ref, bm.LandmarkShape(np.ones((5, 2))))

    def test_preserves_ordering(self):
        ref = bm.synth_shape("circle", 8)
        tgt = bm.LandmarkShape(ref.points * 2.0)
        aligned = bm.procrustes_align(ref, tgt)
        # landmark i of the output corresponds to landmark i of the input
        np.testing.assert_allclose(aligned.points, ref.points, atol=1e-12)


class TestResampleOutline:
    def test_square_corners(self):
        square = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
        out = bm.resample_outline(square, 4)
        np.testing.assert_allclose(out.points, square, atol=1e-12)

    def test_square_with_midpoints(self):
        square = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
        out = bm.resample_outline(square, 8)
        expected = np.array([[0, 0], [0.5, 0], [1, 0], [1, 0.5],
                             [1, 1], [0.5, 1], [0, 1], [0, 0.5]], dtype=float)
        np.testing.assert_allclose(out.points, expected, atol=1e-12)

    def test_circle_arc_length_oracle(self):
        theta = np.linspace(0, 2 * np.pi, 1000, endpoint=False)
        fine = np.c_[np.cos(theta), np.sin(theta)]
        out = bm.resample_outline(fine, 100)
        radii = np.linalg.norm(out.points, axis=1)
        assert np.abs(radii - 1.0).max() <= 1e-3
        angles = np.unwrap(np.arctan2(out.points[:, 1], out.points[:, 0]))
        gaps = np.diff(angles)
        assert np.abs(gaps - 2 * np.pi / 100).max() <= 1e-2

    def test_zero_arc_length(self):
        with pytest.raises(DomainError):
            bm.resample_outline(np.zeros((3, 2)), 5)


class TestSynthShape:
    def test_circle_four_points(self):
        out = bm.synth_shape("circle", 4, {"radius": 1.0})
        expected = np.array([[1, 0], [0, 1], [-1, 0], [0, -1]], dtype=float)
        np.testing.assert_allclose(out.points, expected, atol=1e-12)

    def test_ellipse_on_curve(self):
        out = bm.synth_shape("ellipse", 100, {"a": 2.0, "b": 1.0})
        vals = (out.points[:, 0] / 2.0) ** 2 + out.points[:, 1] ** 2
        np.testing.assert_allclose(vals, 1.0, atol=1e-9)

    def test_blob_deterministic(self):
        a = bm.synth_shape("blob", 50, seed=11)
        b = bm.synth_shape("blob", 50, seed=11)
        np.testing.assert_array_equal(a.points, b.points)

    def test_blob_seed_sensitivity(self):
        a = bm.synth_shape("blob", 50, seed=11)
        b = bm.synth_shape("blob", 50, seed=12)
        assert np.abs(a.points - b.points).max() > 1e-6

    def test_rejects_tiny_n(self):
        with pytest.raises(DomainError):
            bm.synth_shape("circle", 2)


class TestLandmarkCsv:
    def test_round_trip_with_header(self, tmp_path):
        shape = bm.synth_shape("blob", 17, seed=3)
        path = tmp_path / "shape.csv"
        bm.save_landmarks_csv(shape, path)
        loaded = bm.load_landmarks_csv(path)
        np.testing.assert_allclose(loaded.points, shape.points, rtol=0, atol=0)

    def test_headerless(self, tmp_path):
        path = tmp_path / "raw.csv"
        path.write_text("0.0,1.0\n2.0,3.0\n")
        loaded = bm.load_landmarks_csv(path)
        np.testing.assert_array_equal(loaded.points, [[0, 1], [2, 3]])

    def test_ragged_rows_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("0.0,1.0\n2.0,3.0,4.0\n")
        with pytest.raises(DomainError):
            bm.load_landmarks_csv(path)

    def test_shape_invariants(self):
        with pytest.raises(DomainError):
            bm.LandmarkShape(np.zeros((2, 4)))
        with pytest.raises(DomainError):
            bm.LandmarkShape(np.array([[np.inf, 0.0]]))
