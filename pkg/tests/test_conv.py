"""Convolution engine tests: path equivalence, causality, masking,
cross-resolution deployment, irregular sampling, spectral downsampling."""

import numpy as np
import pytest

from fieldconv import autodiff as ad
from fieldconv import masks as mk
from fieldconv.conv import (
    ConvPlan, conv_apply, conv_cross_resolution, conv_direct, conv_fft,
    conv_irregular, conv_separable, flexconv_forward, half_gap_weights,
    sample_kernel, spectral_downsample_conv,
)
from fieldconv.fields import (
    ConfigurationError, coord_grid, eval_field, magnet_new, siren_new,
)
from fieldconv.masks import gaussian_mask, sigmoid_mask

from oracles import conv_reference, dwconv_reference


def constant_field(c, n_out=1, n_in=1):
    f = siren_new(3, 4, 1, n_out, n_in, seed=0)
    for _n, t in f.named_parameters():
        t.data[...] = 0.0
    f.params["b2"].data[...] = c
    return f


class TestSampleKernel:
    def test_constant_field(self):
        f = constant_field(2.5)
        kernel, lag0 = sample_kernel(f, 3, "causal")
        assert lag0 == 0
        np.testing.assert_allclose(kernel.data.reshape(3), [2.5, 2.5, 2.5])

    def test_mask_multiplies_exactly(self):
        f = siren_new(3, 8, 1, 2, 2, seed=1)
        mask = gaussian_mask(9, sigma2=5.0)  # support everywhere
        plain, _ = sample_kernel(f, 9, "causal")
        masked, lag0 = sample_kernel(f, 9, "causal", mask)
        assert lag0 == 0 and masked.shape == plain.shape
        m_vals = mk.mask_eval(mask, np.linspace(-1, 1, 9)).data
        np.testing.assert_allclose(
            masked.data, plain.data * m_vals[:, None, None]
        )

    def test_tiny_support_single_tap(self):
        f = constant_field(1.0)
        mask = gaussian_mask(65, sigma2=1e-9)
        mk.project_bounds(mask)
        kernel, lag0 = sample_kernel(f, 65, "causal", mask)
        assert kernel.shape[0] <= 3
        # convolution degenerates to (windowed) pointwise scaling
        x = np.random.default_rng(0).normal(size=(20, 1))
        out = conv_direct(
            np.pad(x, ((lag0, 0), (0, 0)))[:20], kernel, "causal"
        )
        assert out.shape == (20, 1)


class TestConvDirect:
    def test_impulse_lays_out_kernel(self):
        f = siren_new(3, 8, 1, 1, 1, seed=3)
        kernel, _ = sample_kernel(f, 6, "causal")
        x = np.zeros((10, 1))
        x[0, 0] = 1.0
        out = conv_direct(x, kernel, "causal").data
        np.testing.assert_allclose(out[:6, 0], kernel.data.reshape(6))
        np.testing.assert_allclose(out[6:], 0.0)

    def test_ones_kernel_running_sum(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(12, 1))
        kernel = ad.Tensor(np.ones((4, 1, 1)))
        out = conv_direct(x, kernel, "causal").data
        want = [x[max(0, t - 3):t + 1, 0].sum() for t in range(12)]
        np.testing.assert_allclose(out[:, 0], want, atol=1e-12)

    @pytest.mark.parametrize("mode", ["causal", "centered"])
    def test_matches_reference(self, mode):
        rng = np.random.default_rng(7)
        x = rng.normal(size=(64, 3))
        kernel = rng.normal(size=(9, 2, 3))
        got = conv_direct(x, ad.Tensor(kernel), mode).data
        # summation order differs between einsum and the loop oracle
        assert np.max(np.abs(got - conv_reference(x, kernel, mode))) < 1e-12

    def test_causality_perturbation(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(32, 2))
        kernel = ad.Tensor(rng.normal(size=(8, 2, 2)))
        base = conv_direct(x, kernel, "causal").data
        for t in (5, 20):
            x2 = x.copy()
            x2[t + 1:] = rng.normal(size=x2[t + 1:].shape)
            out2 = conv_direct(x2, kernel, "causal").data
            np.testing.assert_array_equal(base[: t + 1], out2[: t + 1])


class TestConvFFT:
    def test_matches_direct_long(self):
        rng = np.random.default_rng(11)
        x = rng.normal(size=(128, 2))
        kernel = ad.Tensor(rng.normal(size=(128, 3, 2)))
        d = conv_direct(x, kernel, "causal").data
        f = conv_fft(x, kernel, "causal").data
        assert np.max(np.abs(d - f)) < 1e-6

    def test_linearity(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(40, 1))
        kernel = ad.Tensor(rng.normal(size=(16, 1, 1)))
        one = conv_fft(x, kernel, "causal").data
        scaled = conv_fft(3.0 * x, kernel, "causal").data
        np.testing.assert_allclose(scaled, 3.0 * one, atol=1e-10)

    def test_delta_kernel_identity(self):
        x = np.random.default_rng(3).normal(size=(24, 2))
        delta = np.zeros((5, 2, 2))
        delta[0] = np.eye(2)
        out = conv_fft(x, ad.Tensor(delta), "causal").data
        np.testing.assert_allclose(out, x, atol=1e-12)

    @pytest.mark.parametrize("T", [16, 64, 256, 1024])
    def test_path_equivalence_sizes(self, T):
        rng = np.random.default_rng(T)
        cin, cout = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        k = int(rng.integers(1, T + 1))
        x = rng.normal(size=(T, cin))
        kernel = ad.Tensor(rng.normal(size=(k, cout, cin)))
        for mode in ("causal", "centered"):
            d = conv_direct(x, kernel, mode).data
            f = conv_fft(x, kernel, mode).data
            assert np.max(np.abs(d - f)) < 1e-6, (T, k, mode)

    def test_batched_agrees_with_single(self):
        rng = np.random.default_rng(9)
        xb = rng.normal(size=(4, 32, 2))
        kernel = ad.Tensor(rng.normal(size=(8, 3, 2)))
        full = conv_fft(xb, kernel, "causal").data
        for b in range(4):
            np.testing.assert_allclose(
                full[b], conv_fft(xb[b], kernel, "causal").data, atol=1e-10
            )

    def test_grads_flow_through_fft_path(self):
        rng = np.random.default_rng(13)
        x = ad.Tensor(rng.normal(size=(20, 2)))
        kernel = ad.Tensor(rng.normal(size=(6, 2, 2)))

        def loss():
            return ad.mean(ad.square(conv_fft(x, kernel, "causal")))

        assert ad.finite_diff_check_many(loss, [x, kernel]) < 1e-6


class TestAutoPath:
    def test_auto_selects_fft_for_long_kernels(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(128, 1))
        short = ad.Tensor(rng.normal(size=(8, 1, 1)))
        long = ad.Tensor(rng.normal(size=(96, 1, 1)))
        np.testing.assert_allclose(
            conv_apply(x, short, "causal", "auto").data,
            conv_direct(x, short, "causal").data,
        )
        np.testing.assert_allclose(
            conv_apply(x, long, "causal", "auto").data,
            conv_fft(x, long, "causal").data,
        )


class TestFlexconvForward:
    def test_global_mask_is_plain_ckconv(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(40, 2))
        field = siren_new(3, 8, 1, 2, 2, seed=4)
        # sigma so large the mask is exactly 1.0 at float64 on the grid
        mask = gaussian_mask(21, sigma2=1e18)
        plan = ConvPlan(mode="causal", path="direct", kernel_size=21)
        kernel, _ = sample_kernel(field, 21, "causal")
        plain = conv_direct(x, kernel, "causal").data
        flex = flexconv_forward(x, field, mask, plan).data
        np.testing.assert_allclose(flex, plain, rtol=1e-12, atol=1e-12)

    def test_crop_error_bounded_by_threshold(self):
        rng = np.random.default_rng(8)
        x = rng.normal(size=(48, 1))
        field = siren_new(3, 8, 1, 1, 1, seed=8)
        mask = gaussian_mask(33, sigma2=0.02, threshold=0.1)
        plan = ConvPlan(mode="causal", path="direct", kernel_size=33)
        cropped = flexconv_forward(x, field, mask, plan).data
        # uncropped oracle: apply smooth mask everywhere, no support crop
        grid = coord_grid(33, 1, "causal")
        kernel = eval_field(field, grid).data
        m_vals = mk.mask_eval(mask, grid.axes[0]).data
        full = conv_reference(x, kernel * m_vals[:, None, None], "causal")
        bound = mask.threshold * np.abs(x).sum() * np.abs(kernel).max()
        assert np.max(np.abs(cropped - full)) <= bound + 1e-12

    def test_gradients_reach_field_and_mask(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=(24, 1))
        field = magnet_new(3, 4, 1, 1, 1, alpha=2.0, beta=2.0, seed=6)
        mask = gaussian_mask(17, sigma2=0.3)
        plan = ConvPlan(mode="causal", path="direct", kernel_size=17)
        target = rng.normal(size=(24, 1))

        def loss():
            out = flexconv_forward(x, field, mask, plan)
            return ad.mean(ad.square(ad.sub(out, ad.as_tensor(target))))

        params = field.parameters() + [mask.sigma2]
        assert ad.finite_diff_check_many(loss, params, eps=1e-5) < 1e-3

    def test_boundary_tap_gradient_nonzero(self):
        rng = np.random.default_rng(10)
        x = rng.normal(size=(30, 1)) + 1.0
        field = constant_field(1.0)
        mask = gaussian_mask(25, sigma2=0.15)
        plan = ConvPlan(mode="causal", path="direct", kernel_size=25)

        def loss():
            return ad.mean(ad.square(flexconv_forward(x, field, mask, plan)))

        (g,) = ad.grad_of(loss, [mask.sigma2])
        assert abs(float(g)) > 1e-8


class TestSeparable:
    @pytest.mark.parametrize("path", ["direct", "fft"])
    def test_equals_materialized_full_conv(self, path):
        rng = np.random.default_rng(12)
        x = rng.normal(size=(40, 3))
        ck = rng.normal(size=(7, 3))
        mix = rng.normal(size=(4, 3))
        got = conv_separable(x, ad.Tensor(ck), mix, "causal", path).data
        dense = mix[None, :, :] * ck[:, None, :]  # [k, Cout, Cin]
        want = conv_reference(x, dense, "causal")
        assert np.max(np.abs(got - want)) < 1e-9

    def test_dwconv_matches_reference(self):
        rng = np.random.default_rng(14)
        x = rng.normal(size=(30, 4))
        ck = rng.normal(size=(5, 4))
        got = ad.dwconv1d(x, ad.Tensor(ck), mode="centered").data
        np.testing.assert_allclose(
            got, dwconv_reference(x, ck, "centered"), atol=1e-12
        )


class TestCrossResolution:
    def _trained_setup(self, sr1=64, seed=0, omega0=4.0):
        # band-limited field and input well below either grid's Nyquist
        field = siren_new(3, 8, 1, 1, 1, omega0=omega0, seed=seed)
        k1 = sr1 + 1
        plan = ConvPlan(mode="causal", path="direct", kernel_size=k1,
                        sr_train=sr1)
        return field, plan

    def _band_limited(self, T, channels=1, seed=0):
        t = np.linspace(0, 1, T, endpoint=False)
        rng = np.random.default_rng(seed)
        x = np.zeros((T, channels))
        for c in range(channels):
            for f, a in zip((1, 2, 3), rng.uniform(0.5, 1.0, 3)):
                x[:, c] += a * np.sin(2 * np.pi * f * t + rng.uniform(0, 6))
        return x

    def test_same_rate_identical(self):
        field, plan = self._trained_setup()
        x = self._band_limited(64)
        base, _ = sample_kernel(field, plan.kernel_size, "causal")
        want = conv_direct(x, base, "causal").data
        got = conv_cross_resolution(x, field, 64, 64, plan).data
        np.testing.assert_array_equal(got, want)

    def test_rate_factor_on_band_limited_input(self):
        sr1, sr2 = 64, 32
        field, plan = self._trained_setup(sr1)
        x1 = self._band_limited(64)
        x2 = x1[::2]  # the same signal sampled at half rate
        out1 = conv_cross_resolution(x1, field, sr1, sr1, plan).data
        out2 = conv_cross_resolution(
            x2, field, sr1, sr2, plan, apply_rate_factor=False
        ).data
        ref = (sr2 / sr1) * out1[::2]
        rel = np.linalg.norm(out2 - ref) / np.linalg.norm(out1[::2])
        assert rel < 0.05, rel

    def test_correction_restores_scale(self):
        sr1, sr2 = 64, 32
        field, plan = self._trained_setup(sr1)
        x2 = self._band_limited(64)[::2]
        raw = conv_cross_resolution(
            x2, field, sr1, sr2, plan, apply_rate_factor=False
        ).data
        corrected = conv_cross_resolution(x2, field, sr1, sr2, plan).data
        np.testing.assert_allclose(corrected, raw / (sr2 / sr1), atol=1e-12)

    def test_upsampled_deployment_blurs(self):
        sr1, sr2 = 32, 64
        field, plan = self._trained_setup(sr1, omega0=8.0)
        x2 = self._band_limited(128)
        out = conv_cross_resolution(x2, field, sr1, sr2, plan).data
        assert np.all(np.isfinite(out))

    def test_invalid_rate_rejected(self):
        field, plan = self._trained_setup()
        with pytest.raises(ConfigurationError):
            conv_cross_resolution(np.zeros((8, 1)), field, 0, 1, plan)


class TestIrregular:
    def test_uniform_grid_matches_regular_up_to_riemann_factor(self):
        sr = 16
        T = 32
        field = siren_new(3, 8, 1, 1, 1, omega0=5.0, seed=2)
        times = np.arange(T) / sr
        rng = np.random.default_rng(3)
        values = rng.normal(size=(T, 1))
        span = (T - 1) / sr
        out = conv_irregular(
            times, values, np.full(T, 1.0 / sr), field, times, span
        ).data
        kernel, _ = sample_kernel(field, T, "causal")
        regular = conv_direct(values, kernel, "causal").data
        np.testing.assert_allclose(out, regular / sr, atol=1e-9)

    def test_single_sample(self):
        field = constant_field(3.0)
        out = conv_irregular(
            np.array([0.5]), np.array([[2.0]]), np.array([0.25]), field,
            np.array([0.5, 0.7]), span=1.0,
        ).data
        np.testing.assert_allclose(out.reshape(-1), [1.5, 1.5])

    def test_duplicate_samples_with_halved_weights(self):
        field = siren_new(3, 6, 1, 1, 1, seed=4)
        times = np.array([0.1, 0.4, 0.9])
        values = np.array([[1.0], [2.0], [-1.0]])
        w = np.array([0.3, 0.3, 0.4])
        q = np.array([0.5, 1.0])
        base = conv_irregular(times, values, w, field, q, span=1.0).data
        times2 = np.repeat(times, 2) + np.tile([0.0, 1e-12], 3)
        values2 = np.repeat(values, 2, axis=0)
        w2 = np.repeat(w, 2) / 2.0
        dup = conv_irregular(times2, values2, w2, field, q, span=1.0).data
        np.testing.assert_allclose(dup, base, atol=1e-6)

    def test_half_gap_weights(self):
        t = np.array([0.0, 1.0, 3.0, 4.0])
        w = half_gap_weights(t)
        np.testing.assert_allclose(w, [1.0, 1.5, 1.5, 1.0])
        with pytest.raises(ValueError):
            half_gap_weights(np.array([0.0, 0.0, 1.0]))

    def test_positive_weights_required(self):
        field = constant_field(1.0)
        with pytest.raises(ValueError):
            conv_irregular(
                np.array([0.0]), np.array([[1.0]]), np.array([0.0]), field,
                np.array([0.5]), span=1.0,
            )


class TestSpectralDownsample:
    def _setup(self, T=64, seed=0):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(T, 2))
        field = siren_new(3, 8, 1, 2, 2, omega0=6.0, seed=seed)
        plan = ConvPlan(mode="causal", path="fft", kernel_size=T)
        return x, field, plan

    def test_open_mask_equals_conv_fft(self):
        x, field, plan = self._setup()
        T = x.shape[0]
        mask = sigmoid_mask(T // 2 + 1, x_min=0.0, x_max=T / 2, tau=2.0)
        mask.mu.data = np.asarray(1e6)  # mask exactly 1 over all bins
        kernel, _ = sample_kernel(field, T, "causal")
        want = conv_fft(x, kernel, "causal").data
        got = spectral_downsample_conv(x, field, mask, plan).data
        assert got.shape == want.shape
        np.testing.assert_allclose(got, want, atol=1e-10)

    def test_sharp_mask_removes_high_tone(self):
        T = 128
        t = np.arange(T) / T
        x = (np.sin(2 * np.pi * 4 * t) + np.sin(2 * np.pi * 40 * t))[:, None]
        field = constant_field(1.0)
        field.params["b2"].data[...] = 0.0
        # delta kernel: convolution is identity, isolating the filter
        delta = np.zeros((1, 1, 1))
        delta[0, 0, 0] = 1.0
        plan = ConvPlan(mode="causal", path="fft", kernel_size=1)
        mask = sigmoid_mask(T // 2 + 1, x_min=0.0, x_max=T / 2, tau=50.0,
                            mu=20.0)
        out = spectral_downsample_conv(
            x, field, mask, plan, kernel=ad.Tensor(delta)
        ).data
        spec = np.abs(np.fft.rfft(out[:, 0]))**2
        total = spec.sum()
        out_len = out.shape[0]
        kept_bin_4 = spec[4] / total
        assert kept_bin_4 > 0.4  # low tone survives
        # the 40-cycle tone would alias to a bin below out_len//2; all
        # energy there must be filtered out
        high_bins = spec[int(20 * out_len / T) + 2:]
        assert high_bins.sum() / total < 1e-6

    def test_output_length_tracks_analytic_size(self):
        rng = np.random.default_rng(1)
        x, field, plan = self._setup(T=64)
        hits = 0
        for draw in range(50):
            mask = sigmoid_mask(33, x_min=0.0, x_max=32.0, tau=8.0)
            mask.mu.data = np.asarray(rng.uniform(mask.mu_lo, mask.mu_hi))
            out = spectral_downsample_conv(x, field, mask, plan).data
            sized = float(mk.mask_size_analytic(mask).data)
            # analytic size counts bins; output time length is 2*(bins-1)
            want_len = 2.0 * (min(sized, 33) - 1)
            assert abs(out.shape[0] - want_len) <= 2, (draw, out.shape, sized)
            hits += 1
        assert hits == 50

    def test_collapsed_mask_rejected(self):
        x, field, plan = self._setup()
        mask = sigmoid_mask(33, x_min=0.0, x_max=32.0, tau=8.0)
        mask.mu.data = np.asarray(-1e3)
        with pytest.raises(ConfigurationError):
            spectral_downsample_conv(x, field, mask, plan)

    def test_gradients_reach_mask_mu(self):
        x, field, plan = self._setup(T=32)
        mask = sigmoid_mask(17, x_min=0.0, x_max=16.0, tau=2.0, mu=8.0)

        def loss():
            return ad.mean(ad.square(spectral_downsample_conv(x, field, mask, plan)))

        (g,) = ad.grad_of(loss, [mask.mu])
        assert abs(float(g)) > 1e-10
