"""Reconstruction quality metrics and dataset-level evaluation."""

import math

import numpy as np

from . import data
from .errors import DomainError, ShapeError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2
PSNR_CAP = 100.0

GRAY_WEIGHTS = (0.299, 0.587, 0.114)


def psnr(a, b):
    """Peak signal-to-noise ratio in dB for [0,1] images; capped at 100
    when the images are identical so aggregation stays finite."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"psnr inputs disagree: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return 10.0 * math.log10(1.0 / mse)


def to_gray(img):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img
    r, g, b = GRAY_WEIGHTS
    return r * img[:, :, 0] + g * img[:, :, 1] + b * img[:, :, 2]


def gaussian_window(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    half = size // 2
    ax = np.arange(size, dtype=np.float64) - half
    g = np.exp(-(ax[:, None] ** 2 + ax[None, :] ** 2) / (2 * sigma * sigma))
    return g / g.sum()


def _local_moments(x, win):
    size = win.shape[0]
    patches = np.lib.stride_tricks.sliding_window_view(x, (size, size))
    return np.tensordot(patches, win, axes=([2, 3], [0, 1]))


def ssim(a, b):
    """Mean local structural similarity over valid gaussian windows.

    Inputs are RGB or grayscale in [0,1]; RGB is reduced to luma first.
    Identical inputs score exactly 1.0: every window's numerator and
    denominator become the same expression bit for bit.
    """
    ga = to_gray(a)
    gb = to_gray(b)
    if ga.shape != gb.shape:
        raise ShapeError(f"ssim inputs disagree: {ga.shape} vs {gb.shape}")
    if min(ga.shape) < SSIM_WINDOW:
        raise DomainError(f"image {ga.shape} is smaller than the "
                          f"{SSIM_WINDOW}x{SSIM_WINDOW} window")
    win = gaussian_window()
    mu_a = _local_moments(ga, win)
    mu_b = _local_moments(gb, win)
    var_a = _local_moments(ga * ga, win) - mu_a * mu_a
    var_b = _local_moments(gb * gb, win) - mu_b * mu_b
    cov = _local_moments(ga * gb, win) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + SSIM_C1) * (2.0 * cov + SSIM_C2)
    den = (mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return float(np.mean(num / den))


def evaluate(data_dir, render_fn):
    """Mean PSNR/SSIM of render_fn(content, style) against ground truth.

    Per-image scores are summed with compensated 64-bit addition, so the
    report does not depend on evaluation order.
    """
    trips = data.load_triplets(data_dir)
    psnrs, ssims = [], []
    for t in trips:
        out = render_fn(t.content, t.style)
        psnrs.append(psnr(out, t.gt))
        ssims.append(ssim(out, t.gt))
    n = len(trips)
    return {"count": n,
            "psnr": math.fsum(psnrs) / n,
            "ssim": math.fsum(ssims) / n}


def evaluate_checkpoint(data_dir, params, cfg):
    from . import renderer
    return evaluate(data_dir,
                    lambda c, s: renderer.render(params, cfg, c, s))
