"""Built-in verification suites: finite-difference gradient checks and cheap invariants.

Both suites are small enough to run on a laptop CPU in well under a minute and
back the ``selftest`` command.
"""

from __future__ import annotations

import sys

import numpy as np
import torch

from .blocks import FMB, FSM, HGM, VSSM, ChannelLayerNorm
from .gradcheck import grad_check, module_grad_check
from .metrics import psnr, ssim
from .model import ModelConfig, build_model
from .ssm import SS2D, StateConfig, cross_merge, cross_scan, ss2d
from .training import TrainConfig, l1_loss, lr_schedule

BLOCK_TOL = 1e-5
MODEL_TOL = 1e-4
PROBE = (1, 2, 4, 4)
TOY = ModelConfig(groups=2, blocks=2, channels=32, d_state=8, reduction=8)


def _probe(shape=PROBE, seed=0):
    return torch.randn(shape, generator=torch.Generator().manual_seed(seed), dtype=torch.float64)


def _ss2d_check():
    torch.manual_seed(1)
    m = probe_point_(SS2D(StateConfig(d_inner=2, d_state=4)).double(), 1)
    x = _probe(seed=1)
    return grad_check(
        lambda: ss2d(x, m.params, m.cfg),
        {"input:u": x, "a_log": m.a_log, "dt_proj_b": m.dt_proj_b, "x_proj_w": m.x_proj_w,
         "dt_proj_w": m.dt_proj_w, "d_skip": m.d_skip},
        BLOCK_TOL,
    )


def probe_point_(module, seed=0, scale=0.1):
    """Move weights to a generic point for finite-difference probing.

    Every weight gets Gaussian noise so no path is structurally zero. Step-size
    biases are redrawn in [-1, 1]: at their default init the steps are ~1e-3,
    which shrinks the step-projection gradients toward the finite-difference
    rounding floor and makes the comparison measure noise instead of calculus.
    """
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for name, p in module.named_parameters():
            if name.endswith("dt_proj_b"):
                p.copy_(torch.rand(p.shape, generator=gen, dtype=p.dtype) * 2 - 1)
            else:
                p.add_(scale * torch.randn(p.shape, generator=gen, dtype=p.dtype))
    return module


def _model_check():
    model = probe_point_(build_model(TOY, seed=0, dtype=torch.float64), 3)
    x = torch.rand(1, 3, 8, 8, generator=torch.Generator().manual_seed(2), dtype=torch.float64)
    y = torch.rand(1, 3, 32, 32, generator=torch.Generator().manual_seed(3), dtype=torch.float64)
    return module_grad_check(
        model, {"x": x}, MODEL_TOL, forward=lambda d: l1_loss(model(d["x"]), y), total_elements=100
    )


def gradient_suite():
    """Name -> :class:`GradCheckReport` for every block and the full toy model."""
    torch.manual_seed(0)
    reports = {}
    reports["layer_norm"] = module_grad_check(probe_point_(ChannelLayerNorm(2), 0), {"x": _probe()}, BLOCK_TOL)
    reports["ss2d"] = _ss2d_check()
    reports["vssm"] = module_grad_check(
        probe_point_(VSSM(2, d_state=4, dw_kernel=3), 4), {"x": _probe(seed=4)}, BLOCK_TOL
    )
    for v in "abc":
        reports[f"fsm_{v}"] = module_grad_check(probe_point_(FSM(2, v), 5), {"x": _probe(seed=5)}, BLOCK_TOL)
    reports["hgm"] = module_grad_check(probe_point_(HGM(2, reduction=2), 6), {"x": _probe(seed=6)}, BLOCK_TOL)
    reports["fmb"] = module_grad_check(
        probe_point_(FMB(2, d_state=4, reduction=2), 7), {"x": _probe(seed=7)}, BLOCK_TOL
    )
    reports["model"] = _model_check()
    return reports


def invariant_suite():
    """Name -> (passed, detail) for cheap exactness and protocol invariants."""
    out = {}
    x = torch.randn(2, 3, 5, 7, generator=torch.Generator().manual_seed(0))
    merged = cross_merge(cross_scan(x), 5, 7)
    out["cross_merge_scan"] = (bool(torch.equal(merged, 4 * x)), "merge(scan(x)) == 4x")

    fsm = FSM(3, "a")
    with torch.no_grad():
        fsm.conv.weight.zero_()
        fsm.conv.weight[:, :, 0, 0] = torch.eye(6)
        fsm.conv.bias.zero_()
        err = (fsm(x) - x).abs().max().item()
    out["fsm_identity"] = (err <= 1e-5, f"max err {err:.2e}")

    cfg = TrainConfig()
    lrs = [lr_schedule(e, cfg) for e in (0, 200, 400)]
    out["lr_schedule"] = (lrs == [1e-4, 5e-5, 2.5e-5], f"{lrs}")

    a = torch.rand(3, 4, 4, generator=torch.Generator().manual_seed(1))
    ok = l1_loss(a, a).item() == 0 and l1_loss(a, a + 0.1).item() > 0
    out["l1_loss"] = (ok, "zero iff equal")

    z, o = np.zeros((16, 16)), np.ones((16, 16))
    c1 = 1e-4
    closed = c1 / (1 + c1)
    ok = psnr(z, z) == 100.0 and abs(psnr(z, o)) < 1e-12 and ssim(o, o) == 1.0 and abs(ssim(z, o) - closed) < 1e-8
    out["metrics"] = (ok, "psnr cap, 0 dB, ssim identity and constants")

    model = build_model(ModelConfig(groups=1, blocks=1, channels=8, d_state=4, reduction=4), seed=0)
    lr = torch.rand(1, 3, 6, 6)
    with torch.no_grad():
        shape = tuple(model(lr).shape)
    out["model_shape"] = (shape == (1, 3, 24, 24), f"{shape}")
    return out


def run_all(stream=None):
    """Run both suites, printing one line per check. Returns True if all passed."""
    stream = stream or sys.stdout
    ok = True
    for name, rep in gradient_suite().items():
        worst, err = rep.worst()
        status = "PASS" if rep.passed else "FAIL"
        ok &= rep.passed
        print(f"{status} grad {name:<12} max rel err {err:.2e} ({worst}) tol {rep.tolerance:g}", file=stream)
    for name, (passed, detail) in invariant_suite().items():
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'} invariant {name:<18} {detail}", file=stream)
    return ok
