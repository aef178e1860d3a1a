"""Image-quality metrics and the paired significance test.

PSNR assumes inputs already lie in [0, 1] (peak value 1); the rescaling
convention lives in :func:`rescale01` / :func:`rescale_range` so callers can
choose per-image min/max (the default reporting convention) or the fixed
[-1,1] -> [0,1] map appropriate for low-dimensional vector tasks.

SSIM uses the standard 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03,
dynamic range 1, averaged over valid window positions.

The Wilcoxon signed-rank test is exact (full sign-assignment distribution
via rank-sum counting) for n <= 20 and a tie-corrected normal approximation
with continuity correction above that.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import correlate2d
from scipy.stats import norm, rankdata

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def rescale01(img: np.ndarray) -> np.ndarray:
    """Map an image onto [0, 1] by its own min/max; constant images map to 0.5."""
    img = np.asarray(img, dtype=np.float64)
    lo, hi = img.min(), img.max()
    if hi == lo:
        return np.full_like(img, 0.5)
    return (img - lo) / (hi - lo)


def rescale_range(img: np.ndarray) -> np.ndarray:
    """Fixed affine map of [-1, 1]-normalized data onto [0, 1]."""
    return (np.asarray(img, dtype=np.float64) + 1.0) / 2.0


def psnr(ref: np.ndarray, test: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB with peak value 1.

    Inputs must already be in [0, 1]; identical inputs return inf."""
    ref = np.asarray(ref, dtype=np.float64)
    test = np.asarray(test, dtype=np.float64)
    if ref.shape != test.shape:
        raise ValueError(f"shape mismatch: {ref.shape} vs {test.shape}")
    mse = np.mean((ref - test) ** 2)
    if mse == 0.0:
        return np.inf
    return float(10.0 * np.log10(1.0 / mse))


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r ** 2) / (2.0 * sigma ** 2))
    k = np.outer(g, g)
    return k / k.sum()


def ssim(ref: np.ndarray, test: np.ndarray) -> float:
    """Mean local structural similarity over valid window positions."""
    ref = np.asarray(ref, dtype=np.float64)
    test = np.asarray(test, dtype=np.float64)
    if ref.shape != test.shape:
        raise ValueError(f"shape mismatch: {ref.shape} vs {test.shape}")
    if ref.ndim != 2:
        raise ValueError(f"ssim expects 2-D images, got shape {ref.shape}")
    if min(ref.shape) < SSIM_WINDOW:
        raise ValueError(f"image {ref.shape} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")

    k = _gaussian_window(SSIM_WINDOW, SSIM_SIGMA)
    c1 = SSIM_K1 ** 2
    c2 = SSIM_K2 ** 2

    def w(img):
        return correlate2d(img, k, mode="valid")

    mu_r = w(ref)
    mu_t = w(test)
    var_r = w(ref * ref) - mu_r ** 2
    var_t = w(test * test) - mu_t ** 2
    cov = w(ref * test) - mu_r * mu_t
    num = (2 * mu_r * mu_t + c1) * (2 * cov + c2)
    den = (mu_r ** 2 + mu_t ** 2 + c1) * (var_r + var_t + c2)
    return float(np.mean(num / den))


def wilcoxon_signed_rank(a, b) -> float:
    """Two-sided p-value of the paired signed-rank test.

    Zero differences are dropped; at least 5 informative pairs are required.
    Exact distribution for n <= 20, tie-corrected normal approximation with
    continuity correction otherwise.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("paired samples must be equal-length 1-D arrays")
    d = a - b
    d = d[d != 0.0]
    n = d.size
    if n == 0:
        raise ValueError("all differences are zero")
    if n < 5:
        raise ValueError(f"need >= 5 nonzero differences, got {n}")

    ranks = rankdata(np.abs(d))
    w_plus = ranks[d > 0].sum()

    if n <= 20:
        return _exact_two_sided(ranks, w_plus)

    mu = n * (n + 1) / 4.0
    _, counts = np.unique(ranks, return_counts=True)
    tie_term = np.sum(counts ** 3 - counts) / 48.0
    sigma = np.sqrt(n * (n + 1) * (2 * n + 1) / 24.0 - tie_term)
    z = (w_plus - mu - 0.5 * np.sign(w_plus - mu)) / sigma
    return float(min(1.0, 2.0 * norm.sf(abs(z))))


def _exact_two_sided(ranks: np.ndarray, w_plus: float) -> float:
    # count rank-sum outcomes over all 2^n sign assignments; midranks are
    # half-integers, so doubling makes every achievable sum an integer
    scaled = np.round(2.0 * ranks).astype(np.int64)
    total = int(scaled.sum())
    counts = np.zeros(total + 1, dtype=np.float64)
    counts[0] = 1.0
    upper = 0
    for r in scaled:
        counts[r:upper + r + 1] += counts[0:upper + 1]
        upper += r
    counts /= counts.sum()
    w_scaled = int(round(2.0 * w_plus))
    p_low = counts[:w_scaled + 1].sum()
    p_high = counts[w_scaled:].sum()
    return float(min(1.0, 2.0 * min(p_low, p_high)))


@dataclass
class MetricReport:
    """Per-image scores plus aggregates; p-values appear when a baseline is
    compared."""

    psnr: np.ndarray
    ssim: np.ndarray
    p_psnr: float | None = None
    p_ssim: float | None = None

    @property
    def psnr_mean(self) -> float:
        return float(np.mean(self.psnr))

    @property
    def psnr_std(self) -> float:
        return float(np.std(self.psnr))

    @property
    def ssim_mean(self) -> float:
        valid = self.ssim[~np.isnan(self.ssim)]
        return float(valid.mean()) if valid.size else float("nan")

    @property
    def ssim_std(self) -> float:
        valid = self.ssim[~np.isnan(self.ssim)]
        return float(valid.std()) if valid.size else float("nan")


def evaluate_batch(ref_batch: np.ndarray, test_batch: np.ndarray, *,
                   rescale: str = "image") -> MetricReport:
    """Per-sample PSNR/SSIM of a prediction batch against its reference.

    ``rescale`` picks the [0,1] convention: "image" (per-image min/max of
    each image independently) or "range" (fixed [-1,1] -> [0,1]).  SSIM is
    reported as NaN for samples too small for the window (vector tasks).
    """
    ref_batch = np.asarray(ref_batch, dtype=np.float64)
    test_batch = np.asarray(test_batch, dtype=np.float64)
    if ref_batch.shape != test_batch.shape:
        raise ValueError(f"shape mismatch: {ref_batch.shape} vs {test_batch.shape}")
    if rescale not in ("image", "range"):
        raise ValueError(f"rescale must be 'image' or 'range', got {rescale!r}")
    scale = rescale01 if rescale == "image" else rescale_range

    psnrs, ssims = [], []
    for ref, test in zip(ref_batch, test_batch):
        r, t = scale(ref), scale(test)
        psnrs.append(psnr(r, t))
        img = r.squeeze()
        if img.ndim == 2 and min(img.shape) >= SSIM_WINDOW:
            ssims.append(ssim(img, t.squeeze()))
        else:
            ssims.append(np.nan)
    return MetricReport(psnr=np.array(psnrs), ssim=np.array(ssims))
