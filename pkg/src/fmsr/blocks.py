"""Building blocks of the network: VSSM, FSM, HGM and their assembly into FMB/FMG.

All blocks map ``[B, c, H, W]`` to ``[B, c, H, W]``. Pixel-wise linear layers
are written as 1x1 convolutions, which is the same map in NCHW layout.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigError
from .ssm import SS2D, StateConfig

FSM_VARIANTS = ("a", "b", "c")


def layer_norm_channel(x, gain, bias, eps=1e-6):
    """Standardize the channel vector at every pixel, then scale and shift."""
    mean = x.mean(dim=1, keepdim=True)
    xc = x - mean
    var = (xc * xc).mean(dim=1, keepdim=True)
    return xc / torch.sqrt(var + eps) * gain[None, :, None, None] + bias[None, :, None, None]


class ChannelLayerNorm(nn.Module):
    def __init__(self, channels, eps=1e-6):
        super().__init__()
        self.eps = eps
        self.weight = nn.Parameter(torch.ones(channels))
        self.bias = nn.Parameter(torch.zeros(channels))

    def forward(self, x):
        return layer_norm_channel(x, self.weight, self.bias, self.eps)


def inner_width(channels, expansion):
    width = channels * expansion
    if abs(width - round(width)) > 1e-9 or round(width) < 1:
        raise ConfigError(f"expansion {expansion} x channels {channels} is not a positive integer")
    return int(round(width))


def _zero_(conv):
    nn.init.zeros_(conv.weight)
    if conv.bias is not None:
        nn.init.zeros_(conv.bias)


class VSSM(nn.Module):
    """Gated wrapper around the 2D selective scan.

    ``proj_out(LN(ss2d(SiLU(dwconv(proj_in(x))))) * SiLU(gate(x)))``.
    The caller is expected to layer-normalize ``x``.
    """

    def __init__(self, channels, expansion=2.0, d_state=16, dw_kernel=1):
        super().__init__()
        inner = inner_width(channels, expansion)
        if dw_kernel % 2 != 1:
            raise ConfigError(f"dw_kernel must be odd, got {dw_kernel}")
        self.proj_in = nn.Conv2d(channels, inner, 1)
        self.gate = nn.Conv2d(channels, inner, 1)
        self.dwconv = nn.Conv2d(inner, inner, dw_kernel, padding=dw_kernel // 2, groups=inner)
        self.ss2d = SS2D(StateConfig(inner, d_state))
        self.ln_scan = ChannelLayerNorm(inner)
        self.proj_out = nn.Conv2d(inner, channels, 1)

    def scan_branch(self, x):
        return self.ln_scan(self.ss2d(F.silu(self.dwconv(self.proj_in(x)))))

    def gate_branch(self, x):
        return F.silu(self.gate(x))

    def forward(self, x):
        return self.proj_out(self.scan_branch(x) * self.gate_branch(x))

    def residual_safe_init(self):
        _zero_(self.proj_out)


class FSM(nn.Module):
    """Frequency selection: real 2D FFT, a pointwise map on the spectrum, inverse FFT.

    The complex spectrum ``[B, c, H, W//2+1]`` is carried as ``2c`` real
    channels (real parts first, then imaginary). Variants:

    * ``a``: one 1x1 conv (no selection)
    * ``b``: ReLU
    * ``c``: 1x1 conv, GELU, 1x1 conv
    """

    def __init__(self, channels, variant="c", norm="ortho"):
        super().__init__()
        if variant not in FSM_VARIANTS:
            raise ConfigError(f"unknown FSM variant {variant!r}; expected one of {FSM_VARIANTS}")
        self.variant = variant
        self.norm = norm
        width = 2 * channels
        if variant == "a":
            self.conv = nn.Conv2d(width, width, 1)
        elif variant == "c":
            self.conv1 = nn.Conv2d(width, width, 1)
            self.conv2 = nn.Conv2d(width, width, 1)
        with torch.no_grad():
            convs = self.convs()
            for conv in convs:
                conv.weight.mul_(0.1)
                conv.bias.mul_(0.1)
            # Spectrum passes into the selection nonlinearity near-unchanged, but
            # the last conv starts small so stacked blocks do not amplify the stream.
            if len(convs) == 2:
                convs[0].weight[:, :, 0, 0] += torch.eye(width)

    def convs(self):
        if self.variant == "a":
            return [self.conv]
        if self.variant == "c":
            return [self.conv1, self.conv2]
        return []

    def select(self, spec):
        """Apply the variant's pointwise map to stacked real/imaginary channels."""
        if self.variant == "a":
            return self.conv(spec)
        if self.variant == "b":
            return F.relu(spec)
        return self.conv2(F.gelu(self.conv1(spec)))

    def forward(self, x):
        H, W = x.shape[-2:]
        z = torch.fft.rfft2(x, norm=self.norm)
        spec = self.select(torch.cat([z.real, z.imag], dim=1))
        re, im = spec.chunk(2, dim=1)
        return torch.fft.irfft2(torch.complex(re, im), s=(H, W), norm=self.norm)

    def residual_safe_init(self):
        convs = self.convs()
        if convs:
            _zero_(convs[-1])


class ChannelAttention(nn.Module):
    """Squeeze-and-excitation: ``x * sigmoid(expand(relu(reduce(mean_hw(x)))))``."""

    def __init__(self, channels, reduction=16):
        super().__init__()
        if channels % reduction:
            raise ConfigError(f"reduction {reduction} does not divide channels {channels}")
        self.reduce = nn.Conv2d(channels, channels // reduction, 1)
        self.expand = nn.Conv2d(channels // reduction, channels, 1)

    def scale(self, x):
        pooled = x.mean(dim=(2, 3), keepdim=True)
        return torch.sigmoid(self.expand(F.relu(self.reduce(pooled))))

    def forward(self, x):
        return x * self.scale(x)


class HGM(nn.Module):
    """Hybrid gate: a channel-attended local branch gated by a pixel-wise GELU mask."""

    def __init__(self, channels, reduction=16):
        super().__init__()
        self.expand = nn.Conv2d(channels, 2 * channels, 1)
        self.coor_conv = nn.Conv2d(channels, channels, 1)
        self.coor_dw = nn.Conv2d(channels, channels, 3, padding=1, groups=channels)
        self.ca = ChannelAttention(channels, reduction)
        self.gate_lin = nn.Conv2d(channels, channels, 1)
        self.out = nn.Conv2d(channels, channels, 1)

    def forward(self, x):
        x1, x2 = self.expand(x).chunk(2, dim=1)
        coor = self.ca(self.coor_dw(self.coor_conv(x1)))
        mask = F.gelu(self.gate_lin(x2))
        return self.out(mask * coor)

    def residual_safe_init(self):
        _zero_(self.out)


class FMB(nn.Module):
    """One FMB: a scan branch and a gated conv branch, each with a Fourier side path.

    Global stage ``y = a_g * x + VSSM(LN(x)) + FSM(x)``, then local stage
    ``a_l * y + HGM(LN(y)) + FSM(y)``. Both FSMs see un-normalized input.
    """

    def __init__(self, channels, expansion=2.0, d_state=16, reduction=16, fsm_variant="c", dw_kernel=1):
        super().__init__()
        self.ln1 = ChannelLayerNorm(channels)
        self.vssm = VSSM(channels, expansion, d_state, dw_kernel)
        self.fsm_global = FSM(channels, fsm_variant)
        self.ln2 = ChannelLayerNorm(channels)
        self.hgm = HGM(channels, reduction)
        self.fsm_local = FSM(channels, fsm_variant)
        self.alpha_global = nn.Parameter(torch.tensor(1.0))
        self.alpha_local = nn.Parameter(torch.tensor(1.0))

    def global_stage(self, x):
        return self.alpha_global * x + self.vssm(self.ln1(x)) + self.fsm_global(x)

    def local_stage(self, y):
        return self.alpha_local * y + self.hgm(self.ln2(y)) + self.fsm_local(y)

    def forward(self, x):
        return self.local_stage(self.global_stage(x))

    def residual_safe_init(self):
        for m in (self.vssm, self.fsm_global, self.hgm, self.fsm_local):
            m.residual_safe_init()


class FMG(nn.Module):
    """A stack of FMBs followed by a 3x3 conv, with a residual over the whole group."""

    def __init__(self, channels, blocks=6, **block_kwargs):
        super().__init__()
        if blocks < 1:
            raise ConfigError(f"a group needs at least one block, got {blocks}")
        self.blocks = nn.ModuleList(FMB(channels, **block_kwargs) for _ in range(blocks))
        self.conv = nn.Conv2d(channels, channels, 3, padding=1)

    def forward(self, x):
        h = x
        for block in self.blocks:
            h = block(h)
        return self.conv(h) + x

    def residual_safe_init(self):
        for block in self.blocks:
            block.residual_safe_init()
        _zero_(self.conv)
