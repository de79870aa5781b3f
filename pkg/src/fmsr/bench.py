"""Resolution-scaling benchmark: one FMB against a multi-head self-attention layer.

Wall time is the median of repeated single-thread forward passes after warm-up;
FLOPs are analytic multiply-accumulate counts. The exponent ``p`` of
``time ~ N^p`` (N = tokens) is fitted by least squares in log-log space.
"""

from __future__ import annotations

import csv
import statistics
import time
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from .blocks import FMB
from .flops import count_flops

DEFAULT_SIZES = (32, 48, 64, 88)


class MSA(nn.Module):
    """One standard multi-head self-attention layer over flattened tokens (no MLP).

    Queries are processed in chunks so the attention matrix never exceeds
    ``chunk`` rows; results do not depend on the chunk size beyond rounding.
    """

    def __init__(self, dim=180, heads=6, chunk=1024):
        super().__init__()
        if dim % heads:
            raise ValueError(f"heads {heads} must divide dim {dim}")
        self.dim, self.heads, self.chunk = dim, heads, chunk
        self.qkv = nn.Linear(dim, 3 * dim)
        self.proj = nn.Linear(dim, dim)

    def forward(self, x):
        # x: [B, N, dim]
        B, N, _ = x.shape
        hd = self.dim // self.heads
        q, k, v = self.qkv(x).view(B, N, 3, self.heads, hd).permute(2, 0, 3, 1, 4)
        q = q * hd**-0.5
        outs = []
        for i in range(0, N, self.chunk):
            att = torch.softmax(q[:, :, i : i + self.chunk] @ k.transpose(-2, -1), dim=-1)
            outs.append(att @ v)
        out = torch.cat(outs, dim=2).transpose(1, 2).reshape(B, N, self.dim)
        return self.proj(out)


def msa_params(dim):
    return 4 * dim * dim + 4 * dim


def msa_flops(dim, heads, tokens):
    """Projection and attention MACs plus four ops per score (scale, exp, sum, divide)."""
    N = tokens
    linear = N * dim * 3 * dim + N * 3 * dim + N * dim * dim + N * dim
    attention = 2 * N * N * dim  # scores and weighted sum
    softmax = 4 * heads * N * N
    return linear + attention + softmax


def fmb_flops(block: FMB, H, W):
    return count_flops(block, H, W).total


@dataclass
class BenchRecord:
    size: int
    block: str
    params: int
    flops: int
    time_ms: float

    @property
    def tokens(self):
        return self.size * self.size


def _median_ms(fn, repeats, warmup):
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append((time.perf_counter() - t0) * 1e3)
    return statistics.median(times)


def bench_scaling(sizes=DEFAULT_SIZES, fmsr_c=144, msa_dim=180, heads=6, repeats=5, warmup=1, seed=0):
    """Time one FMB (width ``fmsr_c``) and one MSA layer (width ``msa_dim``) per input size."""
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        fmb = FMB(fmsr_c).eval()
        msa = MSA(msa_dim, heads).eval()
    n_fmb = sum(p.numel() for p in fmb.parameters())
    n_msa = sum(p.numel() for p in msa.parameters())
    gen = torch.Generator().manual_seed(seed)
    records = []
    with torch.no_grad():
        for s in sizes:
            x = torch.randn(1, fmsr_c, s, s, generator=gen)
            t = _median_ms(lambda: fmb(x), repeats, warmup)
            records.append(BenchRecord(s, "fmb", n_fmb, fmb_flops(fmb, s, s), t))
            tok = torch.randn(1, s * s, msa_dim, generator=gen)
            t = _median_ms(lambda: msa(tok), repeats, warmup)
            records.append(BenchRecord(s, "msa", n_msa, msa_flops(msa_dim, heads, s * s), t))
    return records


def fit_exponent(records, block, key="time_ms"):
    """Slope of log(key) against log(tokens) for one block."""
    rows = [r for r in records if r.block == block]
    if len(rows) < 2:
        raise ValueError(f"need at least two sizes for {block}")
    x = np.log([r.tokens for r in rows])
    y = np.log([getattr(r, key) for r in rows])
    return float(np.polyfit(x, y, 1)[0])


def write_bench_csv(records, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["size", "block", "params", "flops", "time_ms"])
        for r in records:
            w.writerow([r.size, r.block, r.params, r.flops, f"{r.time_ms:.3f}"])
    return path


def summarize(records):
    lines = [f"{'size':>5} {'block':>5} {'params':>9} {'GFLOPs':>9} {'ms':>10}"]
    for r in records:
        lines.append(f"{r.size:>5} {r.block:>5} {r.params:>9} {r.flops / 1e9:>9.3f} {r.time_ms:>10.2f}")
    for block in sorted({r.block for r in records}):
        lines.append(f"p({block}) = {fit_exponent(records, block):.3f}")
    return "\n".join(lines)

