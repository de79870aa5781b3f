"""Fidelity metrics on the BT.601 luminance channel."""

import numpy as np
from scipy.signal import convolve2d

PSNR_CAP = 100.0


def _np(x):
    if type(x).__module__.startswith("torch"):
        x = x.detach().cpu().numpy()
    return np.asarray(x, dtype=np.float64)


def rgb_to_y(img):
    """Studio-swing BT.601 luma of a ``[3, H, W]`` image in [0, 1]; result in [16/255, 235/255]."""
    r, g, b = _np(img)
    return (16.0 + 65.481 * r + 128.553 * g + 24.966 * b) / 255.0


def psnr(a, b, peak=1.0):
    a, b = _np(a), _np(b)
    mse = np.mean((a - b) ** 2)
    if mse == 0:
        return PSNR_CAP
    return float(min(10.0 * np.log10(peak * peak / mse), PSNR_CAP))


def gaussian_window(size=11, sigma=1.5):
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-(x * x) / (2 * sigma * sigma))
    g /= g.sum()
    return np.outer(g, g)


def ssim_map(a, b, peak=1.0, size=11, sigma=1.5):
    a, b = _np(a), _np(b)
    if a.shape != b.shape or a.ndim != 2:
        raise ValueError(f"ssim needs two equal 2-D images, got {a.shape} and {b.shape}")
    if min(a.shape) < size:
        raise ValueError(f"images must be at least {size}x{size}, got {a.shape}")
    win = gaussian_window(size, sigma)
    c1, c2 = (0.01 * peak) ** 2, (0.03 * peak) ** 2

    def filt(x):
        return convolve2d(x, win, mode="valid")

    mu_a, mu_b = filt(a), filt(b)
    var_a = filt(a * a) - mu_a * mu_a
    var_b = filt(b * b) - mu_b * mu_b
    cov = filt(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return num / den


def ssim(a, b, peak=1.0):
    """Mean SSIM over valid positions of an 11x11 Gaussian window (sigma 1.5)."""
    return float(ssim_map(a, b, peak).mean())


def y_psnr(sr, hr, shave=0):
    ya, yb = rgb_to_y(sr), rgb_to_y(hr)
    if shave:
        ya, yb = ya[shave:-shave, shave:-shave], yb[shave:-shave, shave:-shave]
    return psnr(ya, yb)


def y_ssim(sr, hr, shave=0):
    ya, yb = rgb_to_y(sr), rgb_to_y(hr)
    if shave:
        ya, yb = ya[shave:-shave, shave:-shave], yb[shave:-shave, shave:-shave]
    return ssim(ya, yb)
