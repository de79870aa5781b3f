"""Analytic operation counts.

Convention: one multiply-accumulate counts as one FLOP; every other
elementwise operation (activation, Hadamard product, residual add, scaling,
normalization step) counts as one FLOP per element. Specific rules:

* convolution: ``out * in/groups * k*k * H*W`` MACs plus ``out * H*W`` for the bias;
* layer norm: 5 per element (center, square, normalize, gain, bias);
* selective scan: ``2 * d_state`` MACs per channel per token per direction,
  plus one MAC for the feedthrough;
* real 2D FFT (forward or inverse): ``5 * N * log2(N)`` per channel, ``N = H*W``;
* channel attention: one add per element for pooling, one multiply per element
  for rescaling, plus its two tiny 1x1 convs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch.nn as nn

from .blocks import FMB, FMG, FSM, HGM, VSSM, ChannelAttention, ChannelLayerNorm
from .model import FMSR
from .ssm import SS2D

LN_OPS_PER_ELEMENT = 5


@dataclass
class FlopReport:
    total: int = 0
    breakdown: dict = field(default_factory=dict)

    def add(self, name, count):
        count = int(count)
        self.total += count
        self.breakdown[name] = self.breakdown.get(name, 0) + count

    def by_prefix(self, depth=1):
        out = {}
        for name, count in self.breakdown.items():
            key = ".".join(name.split(".")[:depth])
            out[key] = out.get(key, 0) + count
        return out

    def format(self):
        width = max([len(k) for k in self.breakdown] + [5])
        lines = [f"{name:<{width}}  {count}" for name, count in self.breakdown.items()]
        lines.append(f"{'total':<{width}}  {self.total}")
        return "\n".join(lines) + "\n"


def conv_flops(conv: nn.Conv2d, H, W):
    kh, kw = conv.kernel_size
    macs = conv.out_channels * (conv.in_channels // conv.groups) * kh * kw * H * W
    if conv.bias is not None:
        macs += conv.out_channels * H * W
    return macs


def fft_flops(channels, H, W):
    N = H * W
    return 0 if N <= 1 else round(channels * 5 * N * math.log2(N))


def _ln(rep, name, ln: ChannelLayerNorm, H, W):
    rep.add(name, LN_OPS_PER_ELEMENT * ln.weight.numel() * H * W)


def _ss2d(rep, name, m: SS2D, H, W):
    cfg = m.cfg
    K, d, n, R, L = cfg.num_directions, cfg.d_inner, cfg.d_state, cfg.dt_rank, H * W
    rep.add(f"{name}.x_proj", K * (R + 2 * n) * d * L)
    rep.add(f"{name}.dt_proj", K * (d * R + d) * L)
    rep.add(f"{name}.softplus", K * d * L)
    rep.add(f"{name}.scan", K * (2 * n + 1) * d * L)
    rep.add(f"{name}.merge", (K - 1) * d * L)


def _vssm(rep, name, m: VSSM, H, W):
    inner = m.proj_in.out_channels
    rep.add(f"{name}.proj_in", conv_flops(m.proj_in, H, W))
    rep.add(f"{name}.dwconv", conv_flops(m.dwconv, H, W))
    rep.add(f"{name}.act", 2 * inner * H * W)  # two SiLUs
    _ss2d(rep, f"{name}.ss2d", m.ss2d, H, W)
    _ln(rep, f"{name}.ln_scan", m.ln_scan, H, W)
    rep.add(f"{name}.gate", conv_flops(m.gate, H, W))
    rep.add(f"{name}.product", inner * H * W)
    rep.add(f"{name}.proj_out", conv_flops(m.proj_out, H, W))


def _fsm(rep, name, m: FSM, c, H, W):
    Wf = W // 2 + 1
    rep.add(f"{name}.fft", 2 * fft_flops(c, H, W))
    if m.variant == "a":
        rep.add(f"{name}.conv", conv_flops(m.conv, H, Wf))
    elif m.variant == "b":
        rep.add(f"{name}.relu", 2 * c * H * Wf)
    else:
        rep.add(f"{name}.conv1", conv_flops(m.conv1, H, Wf))
        rep.add(f"{name}.gelu", 2 * c * H * Wf)
        rep.add(f"{name}.conv2", conv_flops(m.conv2, H, Wf))


def _ca(rep, name, m: ChannelAttention, H, W):
    c = m.reduce.in_channels
    rep.add(f"{name}.pool", c * H * W)
    rep.add(f"{name}.mlp", conv_flops(m.reduce, 1, 1) + conv_flops(m.expand, 1, 1))
    rep.add(f"{name}.act", m.reduce.out_channels + c)
    rep.add(f"{name}.rescale", c * H * W)


def _hgm(rep, name, m: HGM, H, W):
    c = m.out.out_channels
    rep.add(f"{name}.expand", conv_flops(m.expand, H, W))
    rep.add(f"{name}.coor_conv", conv_flops(m.coor_conv, H, W))
    rep.add(f"{name}.coor_dw", conv_flops(m.coor_dw, H, W))
    _ca(rep, f"{name}.ca", m.ca, H, W)
    rep.add(f"{name}.gate_lin", conv_flops(m.gate_lin, H, W))
    rep.add(f"{name}.gelu", c * H * W)
    rep.add(f"{name}.product", c * H * W)
    rep.add(f"{name}.out", conv_flops(m.out, H, W))


def _fmb(rep, name, m: FMB, H, W):
    c = m.ln1.weight.numel()
    _ln(rep, f"{name}.ln1", m.ln1, H, W)
    _vssm(rep, f"{name}.vssm", m.vssm, H, W)
    _fsm(rep, f"{name}.fsm_global", m.fsm_global, c, H, W)
    _ln(rep, f"{name}.ln2", m.ln2, H, W)
    _hgm(rep, f"{name}.hgm", m.hgm, H, W)
    _fsm(rep, f"{name}.fsm_local", m.fsm_local, c, H, W)
    # alpha scaling and two adds per stage
    rep.add(f"{name}.integrate", 2 * 3 * c * H * W)


def _fmg(rep, name, m: FMG, H, W):
    for j, block in enumerate(m.blocks):
        _fmb(rep, f"{name}.blocks.{j}", block, H, W)
    rep.add(f"{name}.conv", conv_flops(m.conv, H, W))
    rep.add(f"{name}.residual", m.conv.out_channels * H * W)


def count_flops(model, h, w) -> FlopReport:
    """Analytic FLOPs of one forward pass on an ``h x w`` input.

    Accepts a full :class:`FMSR` or a single FMB/FMG/VSSM/HGM/FSM block.
    """
    rep = FlopReport()
    if isinstance(model, FMSR):
        s, c = model.cfg.scale, model.cfg.channels
        if model.cfg.mean_shift:
            rep.add("mean_shift", 3 * h * w + 3 * s * h * s * w)
        rep.add("head", conv_flops(model.head, h, w))
        for i, g in enumerate(model.groups):
            _fmg(rep, f"groups.{i}", g, h, w)
        rep.add("body_tail", conv_flops(model.body_tail, h, w) + c * h * w)
        rep.add("up_conv", conv_flops(model.up_conv, h, w))
        rep.add("tail", conv_flops(model.tail, s * h, s * w))
    elif isinstance(model, FMG):
        _fmg(rep, "fmg", model, h, w)
    elif isinstance(model, FMB):
        _fmb(rep, "fmb", model, h, w)
    elif isinstance(model, VSSM):
        _vssm(rep, "vssm", model, h, w)
    elif isinstance(model, HGM):
        _hgm(rep, "hgm", model, h, w)
    elif isinstance(model, FSM):
        c = next(iter(model.parameters())).shape[0] // 2 if model.convs() else None
        if c is None:
            raise TypeError("channel count of a parameter-free FSM is unknown; count it within its FMB")
        _fsm(rep, "fsm", model, c, h, w)
    elif isinstance(model, nn.Conv2d):
        rep.add("conv", conv_flops(model, h, w))
    else:
        raise TypeError(f"no FLOP rule for {type(model).__name__}")
    return rep
