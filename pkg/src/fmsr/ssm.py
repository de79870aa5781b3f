"""Selective state-space scan and its four-directional 2D wrapper.

The recurrence, per batch element and channel, is

    h_0 = 0
    h_t = exp(delta_t * A) * h_{t-1} + (delta_t * u_t) * B_t
    y_t = <C_t, h_t> + D * u_t

with a diagonal, strictly negative ``A`` (zero-order hold on ``A``, Euler step
on ``B``). A 2D feature map is unrolled into four token orders (row-major,
column-major and their reversals); each order gets its own scan parameters and
the four outputs are mapped back to the grid and summed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from . import _scan_kernels
from .errors import ConfigError, DomainError, ShapeError

NUM_DIRECTIONS = 4


@dataclass(frozen=True)
class StateConfig:
    d_inner: int
    d_state: int = 16
    dt_rank: int | None = None
    num_directions: int = NUM_DIRECTIONS
    dt_min: float = 1e-3
    dt_max: float = 0.1

    def __post_init__(self):
        if self.dt_rank is None:
            object.__setattr__(self, "dt_rank", math.ceil(self.d_inner / 16))
        if self.d_inner < 1 or self.d_state < 1 or self.dt_rank < 1:
            raise ConfigError(
                f"d_inner, d_state and dt_rank must be >= 1, got "
                f"{self.d_inner}, {self.d_state}, {self.dt_rank}"
            )
        if self.num_directions != NUM_DIRECTIONS:
            raise ConfigError(f"num_directions is fixed at {NUM_DIRECTIONS}")
        if not 0 < self.dt_min <= self.dt_max:
            raise ConfigError(f"need 0 < dt_min <= dt_max, got {self.dt_min}, {self.dt_max}")


class ScanParams(NamedTuple):
    """Per-direction scan parameters; the leading axis indexes direction."""

    a_log: torch.Tensor  # [K, d_inner, d_state]
    d_skip: torch.Tensor  # [K, d_inner]
    x_proj_w: torch.Tensor  # [K, dt_rank + 2 * d_state, d_inner]
    dt_proj_w: torch.Tensor  # [K, d_inner, dt_rank]
    dt_proj_b: torch.Tensor  # [K, d_inner]


# Upper bound on elements of one precomputed decay slab.
_DECAY_CHUNK = 1 << 22


def _decay_chunks(delta, A):
    """Yield ``(c0, exp(delta * A))`` over channel slices of bounded size."""
    nb, K, d, L = delta.shape
    n = A.shape[-1]
    step = max(1, _DECAY_CHUNK // max(1, nb * K * L * n))
    for c0 in range(0, d, step):
        c1 = min(d, c0 + step)
        dec = torch.exp(delta[:, :, c0:c1, :, None] * A[None, :, c0:c1, None, :])
        yield c0, dec.numpy()


class _SelectiveScan(torch.autograd.Function):
    """Autograd bridge to the compiled kernels (CPU only).

    Inputs use the kernel layout documented in ``_scan_kernels``.
    """

    @staticmethod
    def forward(ctx, u, delta, A, B, C, D):
        u, delta, A, B, C, D = (t.detach().contiguous() for t in (u, delta, A, B, C, D))
        y = torch.empty_like(u)
        un, dn, Bn, Cn, Dn, yn = u.numpy(), delta.numpy(), B.numpy(), C.numpy(), D.numpy(), y.numpy()
        for c0, dec in _decay_chunks(delta, A):
            _scan_kernels.scan_forward(un, dn, dec, c0, Bn, Cn, Dn, yn)
        ctx.save_for_backward(u, delta, A, B, C, D)
        return y

    @staticmethod
    def backward(ctx, dy):
        u, delta, A, B, C, D = ctx.saved_tensors
        dy = dy.contiguous()
        du = torch.empty_like(u)
        ddelta = torch.empty_like(delta)
        dA = torch.zeros_like(A)
        dB = torch.zeros_like(B)
        dC = torch.zeros_like(C)
        dD = torch.zeros_like(D)
        arrays = [t.numpy() for t in (A, B, C, D, dy, du, ddelta, dA, dB, dC, dD)]
        un, dn = u.numpy(), delta.numpy()
        for c0, dec in _decay_chunks(delta, A):
            _scan_kernels.scan_backward(un, dn, dec, c0, *arrays)
        return du, ddelta, dA, dB, dC, dD


def _scan(u, delta, A, B, C, D):
    """Grouped scan without validation; B and C are token-major ``[batch, K, L, n]``."""
    return _SelectiveScan.apply(u, delta, A, B, C, D)


def selective_scan_1d(u, delta, A, B_seq, C_seq, D):
    """Run the selective-scan recurrence over the last axis.

    Args:
        u: input sequence, ``[batch, d_inner, L]``.
        delta: positive step sizes, same shape as ``u``.
        A: continuous-time diagonal state matrix, ``[d_inner, d_state]``.
        B_seq: input projections, ``[batch, d_state, L]``.
        C_seq: readout projections, ``[batch, d_state, L]``.
        D: feedthrough, ``[d_inner]``.

    Returns:
        ``y`` with the shape of ``u``. Time and memory are linear in ``L``.
    """
    if u.dim() != 3:
        raise ShapeError(f"u must be [batch, d_inner, L], got {tuple(u.shape)}")
    nb, d, L = u.shape
    if delta.shape != u.shape:
        raise ShapeError(f"delta shape {tuple(delta.shape)} != u shape {tuple(u.shape)}")
    if A.dim() != 2 or A.shape[0] != d:
        raise ShapeError(f"A must be [{d}, d_state], got {tuple(A.shape)}")
    n = A.shape[1]
    for name, t in (("B_seq", B_seq), ("C_seq", C_seq)):
        if tuple(t.shape) != (nb, n, L):
            raise ShapeError(f"{name} must be {(nb, n, L)}, got {tuple(t.shape)}")
    if tuple(D.shape) != (d,):
        raise ShapeError(f"D must be [{d}], got {tuple(D.shape)}")
    if not torch.isfinite(A).all():
        raise DomainError("A must be finite")
    if not (delta > 0).all():
        raise DomainError("delta must be strictly positive")
    y = _scan(
        u.unsqueeze(1),
        delta.unsqueeze(1),
        A.unsqueeze(0),
        B_seq.transpose(1, 2).unsqueeze(1),
        C_seq.transpose(1, 2).unsqueeze(1),
        D.unsqueeze(0),
    )
    return y.squeeze(1)


def cross_scan(x):
    """Unroll ``[B, C, H, W]`` into four token orders, ``[B, 4, C, H*W]``.

    Order 0 is row-major, 1 column-major, 2 and 3 their reversals.
    """
    if x.dim() != 4:
        raise ShapeError(f"expected [B, C, H, W], got {tuple(x.shape)}")
    row = x.flatten(2)
    col = x.transpose(2, 3).flatten(2)
    return torch.stack([row, col, row.flip(-1), col.flip(-1)], dim=1)


def cross_merge(ys, H, W):
    """Map the four scan orders back to row-major ``[B, C, H, W]`` and sum them."""
    if ys.dim() != 4 or ys.shape[1] != NUM_DIRECTIONS:
        raise ShapeError(f"expected [B, 4, C, H*W], got {tuple(ys.shape)}")
    if ys.shape[-1] != H * W:
        raise ShapeError(f"token axis {ys.shape[-1]} != H*W = {H * W}")
    nb, _, c, _ = ys.shape
    row = ys[:, 0] + ys[:, 2].flip(-1)
    col = ys[:, 1] + ys[:, 3].flip(-1)
    col = col.view(nb, c, W, H).transpose(2, 3)
    return row.view(nb, c, H, W) + col


def ss2d(x, params: ScanParams, cfg: StateConfig):
    """Four-directional selective scan over a ``[B, d_inner, H, W]`` feature map."""
    nb, d, H, W = x.shape
    K, n, R = NUM_DIRECTIONS, cfg.d_state, cfg.dt_rank
    if d != cfg.d_inner:
        raise ShapeError(f"input has {d} channels, config expects {cfg.d_inner}")
    expected = {
        "a_log": (K, d, n),
        "d_skip": (K, d),
        "x_proj_w": (K, R + 2 * n, d),
        "dt_proj_w": (K, d, R),
        "dt_proj_b": (K, d),
    }
    for name, shape in expected.items():
        got = tuple(getattr(params, name).shape)
        if got != shape:
            raise ShapeError(f"{name} has shape {got}, expected {shape}")

    L = H * W
    xs = cross_scan(x)  # [B, K, d, L]
    x_dbl = torch.einsum("bkdl,kcd->bkcl", xs, params.x_proj_w)
    dts, Bs, Cs = torch.split(x_dbl, [R, n, n], dim=2)
    dts = torch.einsum("bkrl,kdr->bkdl", dts, params.dt_proj_w)
    delta = F.softplus(dts + params.dt_proj_b[None, :, :, None])
    A = -torch.exp(params.a_log)
    ys = _scan(xs, delta, A, Bs.transpose(2, 3), Cs.transpose(2, 3), params.d_skip)
    return cross_merge(ys.view(nb, K, d, L), H, W)


class SS2D(nn.Module):
    """Parameter container for ``ss2d`` with the usual selective-scan initialization."""

    def __init__(self, cfg: StateConfig):
        super().__init__()
        self.cfg = cfg
        K, d, n, R = cfg.num_directions, cfg.d_inner, cfg.d_state, cfg.dt_rank

        # S4D-real: A = -(1, 2, ..., n) for every channel.
        a = torch.arange(1, n + 1, dtype=torch.float32).repeat(K, d, 1)
        self.a_log = nn.Parameter(torch.log(a))
        self.d_skip = nn.Parameter(torch.ones(K, d))

        bound = d ** -0.5
        self.x_proj_w = nn.Parameter(torch.empty(K, R + 2 * n, d).uniform_(-bound, bound))
        bound = R ** -0.5
        self.dt_proj_w = nn.Parameter(torch.empty(K, d, R).uniform_(-bound, bound))

        # softplus(dt_proj_b) log-uniform in [dt_min, dt_max].
        dt = torch.exp(
            torch.rand(K, d) * (math.log(cfg.dt_max) - math.log(cfg.dt_min)) + math.log(cfg.dt_min)
        )
        self.dt_proj_b = nn.Parameter(dt + torch.log(-torch.expm1(-dt)))

    @property
    def params(self) -> ScanParams:
        return ScanParams(self.a_log, self.d_skip, self.x_proj_w, self.dt_proj_w, self.dt_proj_b)

    def forward(self, x):
        return ss2d(x, self.params, self.cfg)


def scan_permutations(H, W):
    """Index maps of the four scan orders: ``perm[k][i]`` is the row-major token at step ``i``."""
    idx = np.arange(H * W).reshape(H, W)
    row = idx.ravel()
    col = idx.T.ravel()
    return np.stack([row, col, row[::-1], col[::-1]])
