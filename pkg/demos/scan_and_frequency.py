"""
The two global operators
========================

A look at the pieces that give every output pixel a view of the whole image:
the four-direction selective scan and the Fourier-domain block.
"""

import numpy as np
import torch

from fmsr.blocks import FSM
from fmsr.ssm import SS2D, StateConfig, cross_merge, cross_scan, scan_permutations

torch.manual_seed(0)

# cross_scan flattens an image four ways: row-major, column-major, and both reversed
x = torch.arange(6.0).view(1, 1, 2, 3)
seqs = cross_scan(x)
print("scan orders:")
for k in range(4):
    print(" ", seqs[0, k, 0].tolist())

# merging undoes every permutation and sums, so merge(scan(x)) is 4x
print("merge(scan(x)) == 4x:", torch.equal(cross_merge(seqs, 2, 3), 4 * x))
print("permutations for 2x3:", [p.tolist() for p in scan_permutations(2, 3)])

# an SS2D layer on a 16x16 map; B and C depend on the input, so probe at a
# random point (at zero input only the skip term survives)
m = SS2D(StateConfig(d_inner=4, d_state=8)).double()
img = torch.randn(1, 4, 16, 16, dtype=torch.float64, requires_grad=True)
m(img)[0, :, 8, 8].sum().backward()
reach = (img.grad[0].abs().sum(0) > 0).float().mean().item()
print(f"fraction of pixels feeding the centre output: {reach:.2f}")

# the frequency block carries real and imaginary parts as 2c channels;
# with an identity 1x1 conv it is a roundtrip through rfft2/irfft2
fsm = FSM(3, "a")
with torch.no_grad():
    fsm.conv.weight.zero_()
    fsm.conv.weight[:, :, 0, 0] = torch.eye(6)
    fsm.conv.bias.zero_()
    z = torch.randn(1, 3, 9, 10)
    print(f"FSM identity roundtrip error: {(fsm(z) - z).abs().max().item():.2e}")

# a single spectral coefficient is a global change: perturb one and every pixel moves
spec = torch.fft.rfft2(z, norm="ortho")
spec[..., 1, 1] += 1.0
moved = torch.fft.irfft2(spec, s=z.shape[-2:], norm="ortho") - z
print("pixels changed by one coefficient:", int((moved.abs() > 1e-6).sum()), "of", z.numel())
print("mean |change|:", np.round(moved.abs().mean().item(), 4))
