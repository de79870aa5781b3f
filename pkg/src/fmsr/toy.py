"""The toy overfitting recipe: a small FMSR trained on eight fixed synthetic patches.

Used by the acceptance suite, the demos and the tests that need a trained
model. Everything is seeded, so two calls with the same arguments produce
bitwise-identical weights on a single thread.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

from .data import make_pair, synthetic_image
from .evaluate import MetricReport, evaluate_pairs
from .model import ModelConfig, build_model
from .training import TrainConfig, TrainResult, train_loop

TOY_CONFIG = ModelConfig(groups=2, blocks=2, channels=32, d_state=8, reduction=8)
TOY_PATCHES = 8
TOY_HR = 64
TOY_STEPS = 2000
TOY_LR = 1e-4
TOY_BATCH = 4


def toy_pairs(n=TOY_PATCHES, size=TOY_HR, scale=4, first_seed=0, max_freq=0.15):
    """``n`` synthetic ``size``x``size`` HR patches and their bicubic LR partners."""
    return [make_pair(synthetic_image(size, seed=first_seed + i, max_freq=max_freq), scale, f"toy{first_seed + i}")
            for i in range(n)]


def toy_heldout(size=TOY_HR, scale=4):
    """One patch drawn like the training set but never trained on."""
    return toy_pairs(1, size, scale, first_seed=1000)


def toy_train_config(steps=TOY_STEPS, lr=TOY_LR, batch=TOY_BATCH, seed=0, scale=4):
    # one optimizer step per "epoch" and a single halving window: constant lr
    return TrainConfig(lr0=lr, halve_every=steps, total_epochs=steps, steps_per_epoch=1,
                       batch=batch, patch=TOY_HR // scale, seed=seed)


@dataclass
class ToyRun:
    model: object
    pairs: list
    heldout: list
    result: TrainResult
    seconds: float
    train_report: MetricReport

    @property
    def history(self):
        return self.result.history

    @property
    def initial_loss(self):
        return self.history[0][3]

    @property
    def final_loss(self):
        # mean over the last 20 steps; a single minibatch loss is noisy
        tail = [h[3] for h in self.history[-20:]]
        return sum(tail) / len(tail)


def toy_overfit(steps=TOY_STEPS, lr=TOY_LR, batch=TOY_BATCH, seed=0, cfg: ModelConfig = TOY_CONFIG, out_dir=None):
    pairs, heldout = toy_pairs(scale=cfg.scale), toy_heldout(scale=cfg.scale)
    model = build_model(cfg, seed=seed)
    t0 = time.perf_counter()
    result = train_loop(model, pairs, toy_train_config(steps, lr, batch, seed, cfg.scale), out_dir=out_dir)
    seconds = time.perf_counter() - t0
    report = evaluate_pairs(model, pairs)
    return ToyRun(model, pairs, heldout, result, seconds, report)
