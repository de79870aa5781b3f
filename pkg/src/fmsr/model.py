"""Full super-resolution network, its configuration and parameter registry."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import torch
import torch.nn as nn

from .blocks import FMG, FSM_VARIANTS, _zero_, inner_width
from .errors import ConfigError, ShapeError

# Mean RGB of the DIV2K training set, the fixed input shift used across SR codebases.
RGB_MEAN = (0.4488, 0.4371, 0.4040)


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters. Defaults are the published x4 model."""

    scale: int = 4
    groups: int = 6
    blocks: int = 6
    channels: int = 96
    expansion: float = 2.0
    d_state: int = 16
    reduction: int = 16
    fsm_variant: str = "c"
    dw_kernel: int = 1
    residual_safe_init: bool = False
    mean_shift: bool = True

    def __post_init__(self):
        if self.scale not in (2, 3, 4):
            raise ConfigError(f"scale must be 2, 3 or 4, got {self.scale}")
        if self.groups < 1 or self.blocks < 1:
            raise ConfigError(f"groups and blocks must be >= 1, got {self.groups}, {self.blocks}")
        if self.channels < 1 or self.reduction < 1 or self.channels % self.reduction:
            raise ConfigError(f"reduction {self.reduction} must divide channels {self.channels}")
        if self.d_state < 1:
            raise ConfigError(f"d_state must be >= 1, got {self.d_state}")
        if self.fsm_variant not in FSM_VARIANTS:
            raise ConfigError(f"fsm_variant must be one of {FSM_VARIANTS}, got {self.fsm_variant!r}")
        if self.dw_kernel < 1 or self.dw_kernel % 2 == 0:
            raise ConfigError(f"dw_kernel must be a positive odd integer, got {self.dw_kernel}")
        inner_width(self.channels, self.expansion)

    def to_dict(self):
        return dataclasses.asdict(self)


def pixel_shuffle(x, s):
    """Rearrange ``[B, t*s*s, h, w]`` into ``[B, t, s*h, s*w]``.

    ``out[b, k, s*i + dy, s*j + dx] = x[b, k*s*s + dy*s + dx, i, j]``.
    """
    nb, ch, h, w = x.shape
    if ch % (s * s):
        raise ShapeError(f"{ch} channels are not divisible by scale^2 = {s * s}")
    t = ch // (s * s)
    x = x.reshape(nb, t, s, s, h, w).permute(0, 1, 4, 2, 5, 3)
    return x.reshape(nb, t, h * s, w * s)


def pixel_unshuffle(x, s):
    """Inverse of :func:`pixel_shuffle`."""
    nb, t, H, W = x.shape
    if H % s or W % s:
        raise ShapeError(f"spatial size {(H, W)} is not divisible by {s}")
    x = x.reshape(nb, t, H // s, s, W // s, s).permute(0, 1, 3, 5, 2, 4)
    return x.reshape(nb, t * s * s, H // s, W // s)


class FMSR(nn.Module):
    """Shallow conv, ``groups`` FMGs, a refinement conv with global skip, and a
    conv / pixel-shuffle / conv reconstruction tail."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        c, s = cfg.channels, cfg.scale
        self.head = nn.Conv2d(3, c, 3, padding=1)
        self.groups = nn.ModuleList(
            FMG(
                c,
                cfg.blocks,
                expansion=cfg.expansion,
                d_state=cfg.d_state,
                reduction=cfg.reduction,
                fsm_variant=cfg.fsm_variant,
                dw_kernel=cfg.dw_kernel,
            )
            for _ in range(cfg.groups)
        )
        self.body_tail = nn.Conv2d(c, c, 3, padding=1)
        self.up_conv = nn.Conv2d(c, 3 * s * s, 3, padding=1)
        self.tail = nn.Conv2d(3, 3, 3, padding=1)
        # fixed, not trainable and not checkpointed: the network works on mean-free inputs
        mean = torch.tensor(RGB_MEAN if cfg.mean_shift else (0.0, 0.0, 0.0)).view(1, 3, 1, 1)
        self.register_buffer("rgb_mean", mean, persistent=False)
        if cfg.residual_safe_init:
            self.residual_safe_init()

    def residual_safe_init(self):
        """Zero every final projection so the body starts as an identity and
        the output reduces to the shallow-feature reconstruction path."""
        for g in self.groups:
            g.residual_safe_init()
        _zero_(self.body_tail)

    def features(self, x):
        if x.dim() != 4 or x.shape[1] != 3:
            raise ShapeError(f"expected [B, 3, h, w] input, got {tuple(x.shape)}")
        f0 = self.head(x - self.rgb_mean if self.cfg.mean_shift else x)
        f = f0
        for g in self.groups:
            f = g(f)
        return self.body_tail(f) + f0

    def forward(self, x):
        out = self.tail(pixel_shuffle(self.up_conv(self.features(x)), self.cfg.scale))
        return out + self.rgb_mean if self.cfg.mean_shift else out


def build_model(cfg: ModelConfig | None = None, seed=0, dtype=torch.float32) -> FMSR:
    """Construct a model whose initialization depends only on ``seed``."""
    cfg = cfg or ModelConfig()
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        model = FMSR(cfg)
    return model.to(dtype)


@torch.no_grad()
def super_resolve(model, lr):
    """Inference: forward pass clamped to [0, 1]. Accepts ``[3,h,w]`` or ``[B,3,h,w]``."""
    squeeze = lr.dim() == 3
    x = lr.unsqueeze(0) if squeeze else lr
    out = model(x).clamp_(0.0, 1.0)
    return out[0] if squeeze else out


def parameter_registry(model):
    """``(name, shape, count)`` for every trainable tensor, in registration order."""
    return [(name, tuple(p.shape), p.numel()) for name, p in model.named_parameters()]


def count_params(model):
    return sum(count for _, _, count in parameter_registry(model))


def module_param_breakdown(model, depth=1):
    """Parameter counts aggregated by the first ``depth`` components of each name."""
    out = {}
    for name, _, count in parameter_registry(model):
        key = ".".join(name.split(".")[:depth])
        out[key] = out.get(key, 0) + count
    return out


def format_registry(model):
    """Text table of the parameter registry, one tensor per line."""
    rows = parameter_registry(model)
    width = max(len(name) for name, _, _ in rows)
    lines = [f"{'name':<{width}}  {'shape':<20}  count"]
    for name, shape, count in rows:
        dims = "x".join(str(d) for d in shape) or "scalar"
        lines.append(f"{name:<{width}}  {dims:<20}  {count}")
    lines.append(f"{'total':<{width}}  {'':<20}  {count_params(model)}")
    return "\n".join(lines) + "\n"
