"""
Overfitting a small network
===========================

Trains a 32-channel FMSR on eight synthetic 64x64 patches and compares it with
bicubic upscaling. The full run is 2000 steps (about ten minutes on one core);
pass a smaller step count on the command line for a quick look.
"""

import sys

import torch

from fmsr.evaluate import infer
from fmsr.metrics import y_psnr
from fmsr.toy import TOY_STEPS, toy_overfit

torch.set_num_threads(1)
steps = int(sys.argv[1]) if len(sys.argv) > 1 else TOY_STEPS

run = toy_overfit(steps=steps)
print(f"{steps} steps in {run.seconds:.0f}s")
print(f"loss {run.initial_loss:.4f} -> {run.final_loss:.5f}")

for h in run.history[:: max(1, steps // 10)]:
    print(f"  step {h[0]:>5}  loss {h[3]:.5f}")

m = run.train_report.means()
print(f"training patches: {m['psnr']:.2f} dB (bicubic {m['psnr_bicubic']:.2f} dB)")

# held-out patch: the model has memorised the training set, so this is only a sanity check
pair = run.heldout[0]
print(f"held-out single pass: {y_psnr(infer(run.model, pair.lr), pair.hr):.2f} dB")
print(f"held-out self-ensemble: {y_psnr(infer(run.model, pair.lr, ensemble=True), pair.hr):.2f} dB")
