"""Paired LR/HR synthesis by bicubic degradation, patch sampling and PNG I/O.

Images inside the pipeline are float arrays ``[3, H, W]`` in [0, 1].
"""

from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import ShapeError

CUBIC_A = -0.5


def cubic_kernel(x, a=CUBIC_A):
    """Keys cubic convolution kernel with support [-2, 2]."""
    x = np.abs(np.asarray(x, dtype=np.float64))
    x2, x3 = x * x, x * x * x
    near = (a + 2) * x3 - (a + 3) * x2 + 1
    far = a * x3 - 5 * a * x2 + 8 * a * x - 4 * a
    return np.where(x <= 1, near, np.where(x < 2, far, 0.0))


def _reflect(j, n):
    # Symmetric boundary: ... 1 0 | 0 1 ... n-1 | n-1 n-2 ...
    j = np.mod(j, 2 * n)
    return np.where(j >= n, 2 * n - 1 - j, j)


def resize_weights(in_size, out_size, antialias=True):
    """Dense ``[out_size, in_size]`` resampling matrix whose rows sum to 1.

    Pixel centers are half-pixel aligned. When downscaling with ``antialias``
    the kernel is stretched by ``1/scale``.
    """
    if in_size < 1 or out_size < 1:
        raise ValueError(f"sizes must be positive, got in={in_size}, out={out_size}")
    scale = out_size / in_size
    kscale = scale if (antialias and scale < 1) else 1.0
    support = 2.0 / kscale
    centers = (np.arange(out_size) + 0.5) / scale - 0.5
    taps = int(math.ceil(2 * support)) + 2
    first = np.floor(centers - support).astype(np.int64)
    idx = first[:, None] + np.arange(taps)[None, :]
    w = cubic_kernel((centers[:, None] - idx) * kscale)
    w /= w.sum(axis=1, keepdims=True)
    mat = np.zeros((out_size, in_size))
    rows = np.broadcast_to(np.arange(out_size)[:, None], idx.shape)
    np.add.at(mat, (rows, _reflect(idx, in_size)), w)
    return mat


def bicubic_resize(img, out_h, out_w, antialias=True):
    """Separable bicubic resize of a ``[C, H, W]`` array (numpy or torch)."""
    if out_h < 1 or out_w < 1:
        raise ValueError(f"output size must be positive, got {(out_h, out_w)}")
    is_torch = type(img).__module__.startswith("torch")
    arr = img.detach().cpu().numpy() if is_torch else np.asarray(img)
    if arr.ndim != 3:
        raise ShapeError(f"expected [C, H, W], got shape {arr.shape}")
    _, H, W = arr.shape
    wh = resize_weights(H, out_h, antialias)
    ww = resize_weights(W, out_w, antialias)
    out = np.matmul(np.matmul(wh, arr.astype(np.float64)), ww.T)
    dtype = arr.dtype if np.issubdtype(arr.dtype, np.floating) else np.float64
    out = out.astype(dtype)
    if is_torch:
        import torch

        return torch.from_numpy(out).to(img.dtype)
    return out


@dataclass
class ImageU8:
    pixels: np.ndarray  # [H, W, 3] uint8
    path: str | None = None

    @property
    def shape(self):
        return self.pixels.shape


@dataclass
class PairedSample:
    lr: np.ndarray  # [3, h, w] float32
    hr: np.ndarray  # [3, s*h, s*w] float32
    source: str = ""
    offset: tuple = (0, 0)

    @property
    def scale(self):
        return self.hr.shape[1] // self.lr.shape[1]


def to_float(img):
    """uint8 ``[H, W, 3]`` (or :class:`ImageU8`) to float32 ``[3, H, W]`` in [0, 1]."""
    px = img.pixels if isinstance(img, ImageU8) else np.asarray(img)
    return (px.astype(np.float32) / 255.0).transpose(2, 0, 1).copy()


def to_u8(arr):
    """float ``[3, H, W]`` in [0, 1] to uint8 ``[H, W, 3]``; x*255 rounded half away from zero."""
    arr = np.asarray(arr, dtype=np.float64)
    q = np.floor(np.clip(arr, 0.0, 1.0) * 255.0 + 0.5)
    return q.astype(np.uint8).transpose(1, 2, 0).copy()


def load_image(path) -> ImageU8:
    path = os.fspath(path)
    try:
        with Image.open(path) as im:
            if im.mode not in ("RGB", "RGBA", "L", "P"):
                raise OSError(f"unsupported image mode {im.mode}")
            px = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except (OSError, ValueError) as exc:
        raise OSError(f"cannot read image {path}: {exc}") from exc
    return ImageU8(px.copy(), path)


def save_image(img, path):
    """Write an :class:`ImageU8`, a uint8 ``[H, W, 3]`` array, or a float ``[3, H, W]`` array as PNG."""
    path = os.fspath(path)
    if isinstance(img, ImageU8):
        px = img.pixels
    else:
        arr = np.asarray(img)
        px = arr if arr.dtype == np.uint8 else to_u8(arr)
    try:
        Image.fromarray(px, mode="RGB").save(path, format="PNG")
    except (OSError, ValueError) as exc:
        raise OSError(f"cannot write image {path}: {exc}") from exc
    return path


def read_manifest(path):
    """Image paths listed one per line; relative entries resolve against the manifest's folder."""
    base = os.path.dirname(os.path.abspath(path))
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                out.append(line if os.path.isabs(line) else os.path.join(base, line))
    return out


def center_crop_divisible(img, s):
    _, H, W = img.shape
    h2, w2 = H - H % s, W - W % s
    top, left = (H - h2) // 2, (W - w2) // 2
    return img[:, top : top + h2, left : left + w2], (top, left)


def make_pair(hr, s, source=""):
    hr = hr if isinstance(hr, np.ndarray) and hr.ndim == 3 and hr.shape[0] == 3 else to_float(hr)
    hr, offset = center_crop_divisible(hr, s)
    _, H, W = hr.shape
    lr = bicubic_resize(hr, H // s, W // s, antialias=True)
    return PairedSample(lr.astype(np.float32), np.ascontiguousarray(hr, dtype=np.float32), source, offset)


def make_pairs(hr_images, s, min_lr_size=8):
    """Degrade each HR image by antialiased bicubic downscaling.

    ``hr_images`` may hold :class:`ImageU8`, uint8 ``[H, W, 3]`` arrays or float
    ``[3, H, W]`` arrays. Images smaller than ``s * min_lr_size`` are skipped.
    """
    if s < 2:
        raise ValueError(f"scale must be >= 2, got {s}")
    pairs = []
    for i, img in enumerate(hr_images):
        source = img.path if isinstance(img, ImageU8) and img.path else f"image{i}"
        arr = img if (isinstance(img, np.ndarray) and img.ndim == 3 and img.shape[0] == 3) else to_float(img)
        if min(arr.shape[1:]) < s * min_lr_size:
            warnings.warn(f"skipping {source}: {arr.shape[1]}x{arr.shape[2]} is smaller than {s * min_lr_size}")
            continue
        pairs.append(make_pair(arr, s, source))
    return pairs


def _augment(lr, hr, rng):
    k = int(rng.integers(4))
    lr, hr = np.rot90(lr, k, axes=(1, 2)), np.rot90(hr, k, axes=(1, 2))
    if rng.integers(2):
        lr, hr = lr[:, :, ::-1], hr[:, :, ::-1]
    return lr, hr


def sample_patches(pair: PairedSample, patch, batch, seed=None, augment=False):
    """Draw ``batch`` aligned random crops; LR crop at (i, j) pairs with HR crop at (s*i, s*j).

    ``seed`` may be an int or a ``numpy.random.Generator`` (consumed in place).
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    s = pair.scale
    _, h, w = pair.lr.shape
    if patch < 1 or patch > h or patch > w:
        raise ValueError(f"patch {patch} does not fit LR image {h}x{w}")
    lrs = np.empty((batch, 3, patch, patch), np.float32)
    hrs = np.empty((batch, 3, s * patch, s * patch), np.float32)
    for b in range(batch):
        i = int(rng.integers(h - patch + 1))
        j = int(rng.integers(w - patch + 1))
        lr = pair.lr[:, i : i + patch, j : j + patch]
        hr = pair.hr[:, s * i : s * (i + patch), s * j : s * (j + patch)]
        if augment:
            lr, hr = _augment(lr, hr, rng)
        lrs[b], hrs[b] = lr, hr
    return lrs, hrs


def synthetic_image(size, seed=0, n_waves=12, max_freq=0.15):
    """A smooth random RGB test image: a sum of oriented sinusoids per channel.

    ``max_freq`` is in cycles per pixel at the given resolution.
    """
    rng = np.random.default_rng(seed)
    H, W = (size, size) if np.isscalar(size) else size
    yy, xx = np.mgrid[0:H, 0:W].astype(np.float64)
    img = np.empty((3, H, W))
    base = np.zeros((H, W))
    for _ in range(n_waves):
        f = rng.uniform(0.01, max_freq)
        th = rng.uniform(0, np.pi)
        ph = rng.uniform(0, 2 * np.pi)
        base += rng.uniform(0.3, 1.0) * np.sin(2 * np.pi * f * (xx * np.cos(th) + yy * np.sin(th)) + ph)
    base /= np.abs(base).max() + 1e-12
    for c in range(3):
        tint = np.zeros((H, W))
        for _ in range(3):
            f = rng.uniform(0.005, max_freq / 2)
            th = rng.uniform(0, np.pi)
            tint += np.sin(2 * np.pi * f * (xx * np.cos(th) + yy * np.sin(th)) + rng.uniform(0, 2 * np.pi))
        img[c] = 0.5 + 0.3 * base + 0.05 * tint
    return np.clip(img, 0.0, 1.0).astype(np.float32)
