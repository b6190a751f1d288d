"""Sensing operators checked against brute-force and dense-matrix oracles."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import circulant_matrix, dense_cake_matrix, direct_circular_convolution
from cake.errors import DimensionError
from cake.masks import gen_family, gen_rademacher
from cake.operators import (CakeOperator, bccb_convolve, bccb_correlate, cake_adjoint,
                            cake_forward, delta_masks, diff_to_frames, diff_to_frames_adjoint,
                            estimate_norm_squared, frames_to_diff, integrate_adjoint,
                            integrate_downsample, random_demod_adjoint, random_demod_downsample,
                            random_signs, subsample, subsample_adjoint, tv_gradient,
                            tv_gradient_adjoint, tv_norm)
from cake.video import NoiseModel, make_geometry
from cake.wavelets import D4_HIGHPASS, D4_LOWPASS, WaveletTransform, max_levels

DOWNSAMPLERS = ["subsample", "integrate", "random_demod"]


class TestConvolution:
    def test_delta_kernel_is_identity(self, rng):
        x = rng.standard_normal((6, 8))
        h = np.zeros((6, 8))
        h[0, 0] = 1
        assert np.allclose(bccb_convolve(x, h), x, atol=1e-14)

    def test_constant_image(self, rng):
        h = rng.standard_normal((8, 8))
        out = bccb_convolve(np.full((8, 8), 2.5), h)
        assert np.allclose(out, 2.5 * h.sum(), atol=1e-12)

    def test_matches_quadruple_loop(self, rng):
        for _ in range(5):
            x, h = rng.standard_normal((2, 8, 8))
            ref = direct_circular_convolution(x, h)
            assert np.abs(bccb_convolve(x, h) - ref).max() <= 1e-10 * np.abs(ref).max()

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 16), st.integers(1, 16), st.integers(0, 10 ** 6))
    def test_all_sizes_match_dense(self, n1, n2, seed):
        r = np.random.default_rng(seed)
        x, h = r.standard_normal((2, n1, n2))
        ref = (circulant_matrix(h) @ x.ravel()).reshape(n1, n2)
        assert np.abs(bccb_convolve(x, h) - ref).max() <= 1e-10 * max(1.0, np.abs(ref).max())

    def test_correlate_is_adjoint(self, rng):
        x, y, h = rng.standard_normal((3, 6, 10))
        assert np.vdot(bccb_convolve(x, h), y) == pytest.approx(np.vdot(x, bccb_correlate(y, h)))

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            bccb_convolve(np.zeros((4, 4)), np.zeros((4, 5)))


class TestDownsamplers:
    def test_subsample_identity(self, rng):
        x = rng.standard_normal((5, 7))
        assert np.array_equal(subsample(x, 1, 1), x)

    def test_subsample_ramp(self):
        x = np.arange(16.0).reshape(4, 4)
        assert np.array_equal(subsample(x, 2, 2), [[0, 2], [8, 10]])
        assert np.array_equal(subsample(x, 2, 2, (1, 1)), [[5, 7], [13, 15]])

    def test_subsample_adjoint_structure(self, rng):
        y = rng.standard_normal((3, 4))
        up = subsample_adjoint(y, 2, 2, (1, 0))
        assert np.array_equal(subsample(up, 2, 2, (1, 0)), y)
        mask = np.zeros((6, 8), bool)
        mask[1::2, ::2] = True
        assert not up[~mask].any()

    def test_phase_out_of_range(self):
        with pytest.raises(ValueError):
            subsample(np.zeros((4, 4)), 2, 2, (2, 0))

    def test_integrate_constant(self):
        assert np.allclose(integrate_downsample(np.full((6, 6), 1.5), 3, 2), 1.5 * 6)

    def test_integrate_normal_on_block_constant(self, rng):
        small = rng.standard_normal((3, 4))
        img = integrate_adjoint(small, 2, 3)
        assert np.allclose(integrate_adjoint(integrate_downsample(img, 2, 3), 2, 3), 6 * img)

    def test_integrate_hand_sum(self, rng):
        x = rng.standard_normal((4, 4))
        ref = np.array([[x[0:2, 0:2].sum(), x[0:2, 2:4].sum()],
                        [x[2:4, 0:2].sum(), x[2:4, 2:4].sum()]])
        assert np.allclose(integrate_downsample(x, 2, 2), ref, atol=1e-14)

    def test_random_demod(self, rng):
        x = rng.standard_normal((6, 6))
        ones = np.ones((6, 6))
        assert np.allclose(random_demod_downsample(x, ones, 2, 3), integrate_downsample(x, 2, 3))
        assert np.allclose(random_demod_downsample(x, -ones, 2, 3), -integrate_downsample(x, 2, 3))
        s = random_signs((6, 6), 3)
        ref = np.array([[(x * s)[2 * a:2 * a + 2, 3 * b:3 * b + 3].sum() for b in range(2)]
                        for a in range(3)])
        assert np.allclose(random_demod_downsample(x, s, 2, 3), ref, atol=1e-14)
        y = rng.standard_normal((3, 2))
        assert np.vdot(random_demod_downsample(x, s, 2, 3), y) == pytest.approx(
            np.vdot(x, random_demod_adjoint(y, s, 2, 3)))

    def test_binary_signs(self):
        s = random_signs((4, 4), 0, binary=True)
        assert set(np.unique(s)) <= {0.0, 1.0}
        with pytest.raises(ValueError):
            random_demod_downsample(np.ones((4, 4)), s, 2, 2)
        random_demod_downsample(np.ones((4, 4)), s, 2, 2, binary=True)

    def test_invalid_signs(self):
        with pytest.raises(ValueError):
            random_demod_downsample(np.ones((4, 4)), np.full((4, 4), 0.5), 2, 2)


class TestCakeOperator:
    def test_identity_configuration(self, rng):
        g = make_geometry(6, 6, 3, 1, 1, 1)
        op = CakeOperator(g, delta_masks(g))
        f = rng.standard_normal(g.scene_shape)
        assert np.allclose(op.forward(f), f, atol=1e-14)
        assert np.allclose(op.adjoint(f), f, atol=1e-14)

    def test_keyed_exposure_reduction(self, rng):
        g = make_geometry(6, 6, 8, 1, 1, 4)
        op = CakeOperator(g, delta_masks(g))
        f = rng.standard_normal(g.scene_shape)
        assert np.allclose(op.forward(f), f.reshape(2, 4, 6, 6).sum(axis=1), atol=1e-13)

    def test_psf_identity(self):
        g = make_geometry(8, 8, 1, 1, 1, 1)
        seq = gen_rademacher(g, 0)
        delta = np.zeros(g.scene_shape)
        delta[0, 0, 0] = 1.0
        assert np.allclose(CakeOperator(g, seq).forward(delta), seq.masks, atol=1e-15)

    @pytest.mark.parametrize("kind", DOWNSAMPLERS)
    @pytest.mark.parametrize("family", ["rademacher", "phase_shift", "dsm"])
    def test_dense_oracle(self, kind, family, toy_geometry):
        g = toy_geometry
        seq = gen_family(g, family, 1)
        op = CakeOperator(g, seq, kind, sign_seed=2)
        A = dense_cake_matrix(g, seq.masks, kind, signs=op.signs)
        assert np.abs(op.dense() - A).max() <= 1e-10
        y = np.random.default_rng(3).standard_normal(g.measurement_shape)
        assert np.abs(op.adjoint(y).ravel() - A.T @ y.ravel()).max() <= 1e-10

    def test_dense_oracle_with_explicit_phase(self, toy_geometry):
        g = toy_geometry
        seq = gen_rademacher(g, 5)
        op = CakeOperator(g, seq, phase=(0, 1))
        assert np.abs(op.dense() - dense_cake_matrix(g, seq.masks, phase=(0, 1))).max() <= 1e-10

    @pytest.mark.parametrize("kind", DOWNSAMPLERS)
    def test_adjoint_identity(self, kind, rng):
        g = make_geometry(16, 8, 6, 2, 2, 3)
        op = CakeOperator(g, gen_rademacher(g, 0), kind, sign_seed=1)
        for _ in range(10):
            f = rng.standard_normal(g.scene_shape)
            y = rng.standard_normal(g.measurement_shape)
            lhs, rhs = np.vdot(op.forward(f), y), np.vdot(f, op.adjoint(y))
            assert abs(lhs - rhs) <= 1e-10 * abs(lhs)

    def test_linearity(self, rng, toy_geometry):
        op = CakeOperator(toy_geometry, gen_rademacher(toy_geometry, 0))
        f, h = rng.standard_normal((2,) + toy_geometry.scene_shape)
        lhs = op.forward(2.0 * f - 0.5 * h)
        assert np.abs(lhs - (2.0 * op.forward(f) - 0.5 * op.forward(h))).max() < 1e-12

    def test_cube_wrappers_and_noise(self, rng, toy_geometry):
        g = toy_geometry
        op = CakeOperator(g, gen_rademacher(g, 0))
        f = rng.standard_normal(g.scene_shape)
        clean = cake_forward(op, f)
        assert clean.kind == "measurement" and clean.frame_rate_ratio == g.B
        noisy = cake_forward(op, f, NoiseModel("gaussian", 0.01, 0))
        assert 0 < np.abs(noisy.frames - clean.frames).max() < 0.1
        assert cake_adjoint(op, clean).shape == g.scene_shape

    def test_geometry_mismatch(self, toy_geometry):
        op = CakeOperator(toy_geometry, gen_rademacher(toy_geometry, 0))
        with pytest.raises(DimensionError):
            op.forward(np.zeros((4, 8, 6)))
        with pytest.raises(DimensionError):
            op.adjoint(np.zeros((2, 4, 3)))

    def test_power_iteration_reproducible(self, toy_geometry):
        op = CakeOperator(toy_geometry, gen_rademacher(toy_geometry, 0))
        a = estimate_norm_squared(op.forward, op.adjoint, toy_geometry.scene_shape, 200, 0)
        b = estimate_norm_squared(op.forward, op.adjoint, toy_geometry.scene_shape, 200, 0)
        exact = np.linalg.norm(dense_cake_matrix(toy_geometry, op.masks), 2) ** 2
        assert a == b and np.isfinite(a)
        assert a == pytest.approx(exact, rel=1e-3)

    def test_sparse_linear_operator_view(self, rng, toy_geometry):
        op = CakeOperator(toy_geometry, gen_rademacher(toy_geometry, 0))
        lin = op.as_linear_operator()
        v = rng.standard_normal(lin.shape[1])
        assert np.allclose(lin @ v, op.forward(v.reshape(toy_geometry.scene_shape)).ravel())


class TestDifferenceFrames:
    def test_constant_in_time(self, rng):
        f = np.broadcast_to(rng.standard_normal((4, 4)), (5, 4, 4))
        theta = frames_to_diff(f)
        assert np.array_equal(theta[0], f[0]) and not theta[1:].any()

    def test_single_innovation(self, rng):
        theta = np.zeros((4, 3, 3))
        theta[0] = rng.standard_normal((3, 3))
        assert np.allclose(diff_to_frames(theta), theta[0])

    def test_round_trip(self, rng):
        f = rng.standard_normal((7, 5, 4))
        assert np.abs(diff_to_frames(frames_to_diff(f)) - f).max() < 1e-12
        assert np.abs(frames_to_diff(diff_to_frames(f)) - f).max() < 1e-12

    def test_adjoint(self, rng):
        a, b = rng.standard_normal((2, 6, 3, 3))
        assert np.vdot(diff_to_frames(a), b) == pytest.approx(np.vdot(a, diff_to_frames_adjoint(b)))


class TestWavelet:
    def test_constant_has_no_detail(self):
        w = WaveletTransform(2).forward(np.full((16, 16), 3.0))
        details = w.copy()
        details[:4, :4] = 0
        assert np.abs(details).max() < 1e-12

    def test_orthonormal(self, rng):
        x = rng.standard_normal((32, 16))
        wt = WaveletTransform()
        c = wt.forward(x)
        assert np.linalg.norm(c) == pytest.approx(np.linalg.norm(x), rel=1e-10)
        assert np.abs(wt.inverse(c) - x).max() < 1e-10

    def test_published_taps_single_level(self):
        s3 = np.sqrt(3)
        taps = np.array([1 + s3, 3 + s3, 3 - s3, 1 - s3]) / (4 * np.sqrt(2))
        assert np.allclose(D4_LOWPASS, taps)
        x = np.array([1.0, 4.0, -2.0, 3.0])
        lo = [sum(taps[j] * x[(2 * i + j) % 4] for j in range(4)) for i in range(2)]
        hi = [sum(D4_HIGHPASS[j] * x[(2 * i + j) % 4] for j in range(4)) for i in range(2)]
        # separable transform of a single-row image repeated twice
        img = np.tile(x, (2, 1))
        c = WaveletTransform(1).forward(img)
        col = np.sqrt(2.0)
        assert np.allclose(c[0, :2], col * np.array(lo), atol=1e-12)
        assert np.allclose(c[0, 2:], col * np.array(hi), atol=1e-12)
        assert np.abs(c[1]).max() < 1e-12

    def test_stacks(self, rng):
        x = rng.standard_normal((3, 8, 8))
        wt = WaveletTransform(2)
        assert np.allclose(wt.forward(x)[1], wt.forward(x[1]))

    def test_non_dyadic_levels(self):
        assert max_levels((12, 16)) == 2
        with pytest.raises(DimensionError):
            WaveletTransform(3).forward(np.zeros((12, 16)))


class TestTvStencils:
    def test_constant(self):
        gh, gv = tv_gradient(np.full((5, 5), 2.0))
        assert not gh.any() and not gv.any()
        assert tv_norm(np.full((5, 5), 2.0)) == 0

    def test_adjoint(self, rng):
        x, a, b = rng.standard_normal((3, 6, 7))
        gh, gv = tv_gradient(x)
        assert np.vdot(gh, a) + np.vdot(gv, b) == pytest.approx(np.vdot(x, tv_gradient_adjoint(a, b)))

    def test_hand_2x2(self):
        x = np.array([[1.0, 2.0], [4.0, 8.0]])
        gh, gv = tv_gradient(x)
        assert np.array_equal(gh, [[1, -1], [4, -4]])
        assert np.array_equal(gv, [[3, 6], [-3, -6]])
        expected = np.sqrt(1 + 9) + np.sqrt(1 + 36) + np.sqrt(16 + 9) + np.sqrt(16 + 36)
        assert tv_norm(x) == pytest.approx(expected)
