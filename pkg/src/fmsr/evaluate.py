"""Evaluation: Y-channel fidelity reports, self-ensemble inference and effective receptive fields."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn

from .data import bicubic_resize, load_image, make_pair, save_image, to_float
from .metrics import y_psnr, y_ssim

IMAGE_EXTS = (".png", ".bmp", ".jpg", ".jpeg", ".tif", ".tiff")


class BicubicUpscaler(nn.Module):
    """Parameter-free stand-in model: plain bicubic upscaling by ``scale``."""

    def __init__(self, scale=4):
        super().__init__()
        self.scale = scale

    def forward(self, x):
        H, W = x.shape[-2:]
        size = (H * self.scale, W * self.scale)
        if x.dim() == 3:
            return bicubic_resize(x, *size, antialias=False)
        return torch.stack([bicubic_resize(img, *size, antialias=False) for img in x])


# Dihedral group of the square: (quarter turns, mirror).
DIHEDRAL = [(k, flip) for flip in (False, True) for k in range(4)]


def dihedral(x, k, flip):
    if flip:
        x = x.flip(-1)
    return torch.rot90(x, k, dims=(-2, -1))


def dihedral_inverse(x, k, flip):
    x = torch.rot90(x, -k, dims=(-2, -1))
    return x.flip(-1) if flip else x


@torch.no_grad()
def self_ensemble(model, lr):
    """Average the model over the 8 dihedral transforms of ``lr``, then clamp to [0, 1]."""
    squeeze = lr.dim() == 3
    x = lr[None] if squeeze else lr
    acc = None
    for k, flip in DIHEDRAL:
        y = dihedral_inverse(model(dihedral(x, k, flip)), k, flip)
        acc = y if acc is None else acc + y
    out = (acc / len(DIHEDRAL)).clamp(0, 1)
    return out[0] if squeeze else out


@torch.no_grad()
def infer(model, lr: np.ndarray, ensemble=False):
    """Super-resolve one ``[3, h, w]`` float image; returns a clamped float array."""
    # parameter-free models (the bicubic stub) run in float64 like the baseline
    dtype = next(model.parameters(), torch.empty(0, dtype=torch.float64)).dtype
    x = torch.from_numpy(np.ascontiguousarray(lr)).to(dtype)[None]
    y = self_ensemble(model, x) if ensemble else model(x).clamp(0, 1)
    return y[0].double().numpy()


@dataclass
class MetricRow:
    name: str
    psnr: float
    ssim: float
    psnr_bicubic: float
    ssim_bicubic: float


@dataclass
class MetricReport:
    rows: list = field(default_factory=list)

    def mean(self, attr):
        return float(np.mean([getattr(r, attr) for r in self.rows])) if self.rows else float("nan")

    def means(self):
        return {a: self.mean(a) for a in ("psnr", "ssim", "psnr_bicubic", "ssim_bicubic")}

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["image", "psnr", "ssim", "psnr_bicubic", "ssim_bicubic"])
            for r in self.rows:
                w.writerow([r.name, f"{r.psnr:.6f}", f"{r.ssim:.6f}", f"{r.psnr_bicubic:.6f}", f"{r.ssim_bicubic:.6f}"])
            m = self.means()
            w.writerow(["mean", *(f"{m[k]:.6f}" for k in ("psnr", "ssim", "psnr_bicubic", "ssim_bicubic"))])
        return path


def evaluate_pairs(model, pairs, names=None, shave=0, ensemble=False):
    """Score ``model`` and the bicubic baseline on ``PairedSample``s against their HR images."""
    model.eval()
    report = MetricReport()
    for i, pair in enumerate(pairs):
        name = names[i] if names else (os.path.basename(pair.source) or f"image_{i:04d}")
        H, W = pair.hr.shape[-2:]
        sr = infer(model, pair.lr, ensemble)
        bic = np.clip(bicubic_resize(pair.lr.astype(np.float64), H, W, antialias=False), 0, 1)
        hr = pair.hr.astype(np.float64)
        report.rows.append(
            MetricRow(name, y_psnr(sr, hr, shave), y_ssim(sr, hr, shave), y_psnr(bic, hr, shave), y_ssim(bic, hr, shave))
        )
    return report


def list_images(folder):
    names = sorted(f for f in os.listdir(folder) if f.lower().endswith(IMAGE_EXTS))
    return [os.path.join(folder, f) for f in names]


def evaluate_dir(model, hr_dir, scale, shave=0, ensemble=False, out_csv=None):
    """Degrade every HR image in ``hr_dir`` by ``scale``, super-resolve and score it."""
    paths = list_images(hr_dir)
    if not paths:
        raise FileNotFoundError(f"no images found in {hr_dir}")
    pairs = [make_pair(to_float(load_image(p)), scale, p) for p in paths]
    report = evaluate_pairs(model, pairs, [os.path.basename(p) for p in paths], shave, ensemble)
    if out_csv:
        report.write_csv(out_csv)
    return report


def conv_reference_net(channels=8, layers=3, seed=0):
    """Plain stack of 3x3 convolutions: receptive field ``2 * layers + 1`` pixels wide."""
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        mods = [nn.Conv2d(3 if i == 0 else channels, 3 if i == layers - 1 else channels, 3, padding=1) for i in range(layers)]
    return nn.Sequential(*mods)


@dataclass
class ErfResult:
    grid: np.ndarray  # [H, W] in [0, 1]
    raw: np.ndarray  # [H, W] un-normalized gradient magnitude


def erf_map(model, x, out_path=None, log_scale=False):
    """Effective receptive field of the central output pixel.

    Gradient of the channel sum of the central output pixel w.r.t. the input,
    |.| summed over input channels and normalized by its maximum. With
    ``out_path`` a heatmap PNG (darker = larger) and a ``.npy`` of raw values
    are written next to each other.
    """
    if x.dim() == 3:
        x = x[None]
    x = x.detach().clone().requires_grad_(True)
    model.eval()
    out = model(x)
    Ho, Wo = out.shape[-2:]
    out[0, :, Ho // 2, Wo // 2].sum().backward()
    raw = x.grad[0].abs().sum(0).double().numpy()
    grid = np.log1p(raw) if log_scale else raw.copy()
    peak = grid.max()
    if peak > 0:
        grid = grid / peak
    if out_path:
        shade = np.repeat((1.0 - grid)[None], 3, axis=0)
        save_image(shade, out_path)
        np.save(os.path.splitext(out_path)[0] + ".npy", raw)
    return ErfResult(grid, raw)
