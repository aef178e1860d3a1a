import numpy as np
import pytest

from bridgekit.metrics import (
    SSIM_SIGMA,
    SSIM_WINDOW,
    evaluate_batch,
    psnr,
    rescale01,
    ssim,
    wilcoxon_signed_rank,
)


class TestPsnr:
    def test_constant_offset_closed_form(self):
        ref = np.random.default_rng(0).uniform(0.2, 0.7, (8, 8))
        assert psnr(ref, ref + 0.1) == pytest.approx(20.0, abs=1e-9)

    def test_identical_gives_inf(self):
        ref = np.random.default_rng(1).uniform(0, 1, (4, 4))
        assert psnr(ref, ref.copy()) == np.inf

    def test_halving_offset_adds_6dB(self):
        ref = np.random.default_rng(2).uniform(0.3, 0.6, (8, 8))
        gain = psnr(ref, ref + 0.05) - psnr(ref, ref + 0.1)
        assert gain == pytest.approx(20.0 * np.log10(2.0), abs=1e-9)

    def test_strictly_decreasing_in_mse(self):
        ref = np.zeros((6, 6))
        values = [psnr(ref, ref + off) for off in (0.01, 0.02, 0.05, 0.2)]
        assert all(a > b for a, b in zip(values, values[1:]))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            psnr(np.zeros((3, 3)), np.zeros((3, 4)))


def brute_force_ssim(ref, test):
    """Direct per-window evaluation with explicit loops (oracle)."""
    r = np.arange(SSIM_WINDOW) - (SSIM_WINDOW - 1) / 2.0
    g = np.exp(-(r ** 2) / (2.0 * SSIM_SIGMA ** 2))
    k = np.outer(g, g)
    k /= k.sum()
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    h, w = ref.shape
    vals = []
    for i in range(h - SSIM_WINDOW + 1):
        for j in range(w - SSIM_WINDOW + 1):
            rw = ref[i:i + SSIM_WINDOW, j:j + SSIM_WINDOW]
            tw = test[i:i + SSIM_WINDOW, j:j + SSIM_WINDOW]
            mu_r = (k * rw).sum()
            mu_t = (k * tw).sum()
            var_r = (k * rw * rw).sum() - mu_r ** 2
            var_t = (k * tw * tw).sum() - mu_t ** 2
            cov = (k * rw * tw).sum() - mu_r * mu_t
            vals.append(((2 * mu_r * mu_t + c1) * (2 * cov + c2))
                        / ((mu_r ** 2 + mu_t ** 2 + c1) * (var_r + var_t + c2)))
    return float(np.mean(vals))


class TestSsim:
    def test_identical_images(self):
        img = np.random.default_rng(3).uniform(0, 1, (12, 12))
        assert ssim(img, img.copy()) == pytest.approx(1.0, abs=1e-12)

    def test_symmetric_and_below_one_for_inverted(self):
        img = np.random.default_rng(4).uniform(0, 1, (14, 14))
        inv = 1.0 - img
        assert ssim(img, inv) < 1.0
        assert ssim(img, inv) == pytest.approx(ssim(inv, img), abs=1e-14)

    def test_matches_brute_force_windows(self):
        rng = np.random.default_rng(5)
        ref = rng.uniform(0, 1, (12, 12))
        test = np.clip(ref + rng.normal(0, 0.1, (12, 12)), 0, 1)
        assert ssim(ref, test) == pytest.approx(brute_force_ssim(ref, test), abs=1e-10)

    def test_too_small_image(self):
        with pytest.raises(ValueError, match="window"):
            ssim(np.zeros((8, 8)), np.zeros((8, 8)))

    def test_unity_iff_identical(self):
        img = np.random.default_rng(6).uniform(0, 1, (12, 12))
        assert ssim(img, np.clip(img + 0.01, 0, 1)) < 1.0 - 1e-12


class TestWilcoxon:
    def test_n6_all_positive_exact(self):
        a = np.array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
        b = a - np.array([0.3, 0.1, 0.4, 0.2, 0.6, 0.5])
        assert wilcoxon_signed_rank(a, b) == pytest.approx(2.0 / 64.0, abs=1e-12)

    def test_antisymmetry(self):
        rng = np.random.default_rng(7)
        a = rng.normal(size=12)
        b = a + rng.normal(0, 0.5, size=12)
        assert wilcoxon_signed_rank(a, b) == pytest.approx(wilcoxon_signed_rank(b, a), abs=1e-12)

    def test_all_zero_differences(self):
        a = np.arange(8, dtype=float)
        with pytest.raises(ValueError, match="zero"):
            wilcoxon_signed_rank(a, a.copy())

    def test_too_few_pairs(self):
        a = np.array([1.0, 2.0, 3.0, 4.0])
        with pytest.raises(ValueError, match=">= 5"):
            wilcoxon_signed_rank(a, a + 1.0)

    def test_exact_vs_normal_agreement_at_boundary(self):
        # compare the two computation paths on n=20 samples
        rng = np.random.default_rng(8)
        from bridgekit.metrics import _exact_two_sided
        from scipy.stats import rankdata

        for _ in range(30):
            d = rng.normal(0.2, 1.0, 20)
            d = d[d != 0]
            ranks = rankdata(np.abs(d))
            w_plus = ranks[d > 0].sum()
            exact = _exact_two_sided(ranks, w_plus)
            n = d.size
            mu = n * (n + 1) / 4.0
            sigma = np.sqrt(n * (n + 1) * (2 * n + 1) / 24.0)
            from scipy.stats import norm
            z = (w_plus - mu - 0.5 * np.sign(w_plus - mu)) / sigma
            approx = min(1.0, 2.0 * norm.sf(abs(z)))
            assert abs(exact - approx) <= 0.01


class TestEvaluateBatch:
    def test_image_batch_report(self):
        rng = np.random.default_rng(9)
        ref = rng.uniform(-1, 1, (5, 1, 16, 16))
        test = np.clip(ref + rng.normal(0, 0.05, ref.shape), -1, 1)
        report = evaluate_batch(ref, test)
        assert report.psnr.shape == (5,)
        assert np.all(np.isfinite(report.ssim))
        assert report.psnr_mean > 10

    def test_vector_batch_ssim_is_nan(self):
        ref = np.random.default_rng(10).uniform(-1, 1, (4, 2))
        report = evaluate_batch(ref, ref * 0.9, rescale="range")
        assert np.all(np.isnan(report.ssim))
        assert np.all(np.isfinite(report.psnr))

    def test_rescale01_endpoints(self):
        img = np.array([[0.0, 2.0], [4.0, 1.0]])
        out = rescale01(img)
        assert out.min() == 0.0 and out.max() == 1.0
