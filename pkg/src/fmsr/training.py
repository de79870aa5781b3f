"""L1/Adam training loop with step-halving learning-rate schedule and checkpointing."""

from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass, field

import numpy as np
import torch

from .checkpoint import OPTIM_PREFIX, Checkpoint, save_checkpoint
from .config import build_config, to_strings
from .data import sample_patches
from .errors import ConfigError, NonFiniteError, ShapeError
from .model import ModelConfig, build_model

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr0: float = 1e-4
    halve_every: int = 200
    total_epochs: int = 500
    steps_per_epoch: int = 100
    batch: int = 4
    patch: int = 64
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    checkpoint_every: int = 0
    augment: bool = False

    def __post_init__(self):
        if self.lr0 <= 0:
            raise ConfigError(f"lr0 must be positive, got {self.lr0}")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ConfigError(f"betas must lie in (0, 1), got {self.beta1}, {self.beta2}")
        if self.halve_every < 1 or self.halve_every > self.total_epochs:
            raise ConfigError(f"need 1 <= halve_every <= total_epochs, got {self.halve_every}, {self.total_epochs}")
        if self.steps_per_epoch < 0 or self.batch < 1 or self.patch < 1:
            raise ConfigError("steps_per_epoch must be >= 0; batch and patch >= 1")


def l1_loss(pred, gt):
    if pred.shape != gt.shape:
        raise ShapeError(f"prediction {tuple(pred.shape)} and target {tuple(gt.shape)} differ")
    return (pred - gt).abs().mean()


def lr_schedule(epoch, cfg: TrainConfig):
    return cfg.lr0 * 0.5 ** (epoch // cfg.halve_every)


def adam_update(theta, grad, m, v, step, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update, in place on ``theta``, ``m`` and ``v``.

    ``step`` is the 1-based index of this update.
    """
    m.mul_(beta1).add_(grad, alpha=1 - beta1)
    v.mul_(beta2).addcmul_(grad, grad, value=1 - beta2)
    m_hat = m / (1 - beta1**step)
    v_hat = v / (1 - beta2**step)
    theta.sub_(lr * m_hat / (v_hat.sqrt() + eps))
    return theta


class Adam:
    """Adam over a model's named parameters, with state keyed by parameter name."""

    def __init__(self, named_params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = dict(named_params)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {n: torch.zeros_like(p) for n, p in self.params.items()}
        self.v = {n: torch.zeros_like(p) for n, p in self.params.items()}
        self.t = 0

    @torch.no_grad()
    def step(self, lr):
        grads = {}
        for name, p in self.params.items():
            if p.grad is None:
                continue
            if not torch.isfinite(p.grad).all():
                raise NonFiniteError(f"non-finite gradient in {name}", where=name)
            grads[name] = p.grad
        self.t += 1
        for name, g in grads.items():
            adam_update(self.params[name], g, self.m[name], self.v[name], self.t, lr, self.beta1, self.beta2, self.eps)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def state_tensors(self):
        out = {"step": torch.tensor(self.t, dtype=torch.int64)}
        for name in self.params:
            out[f"m/{name}"] = self.m[name]
            out[f"v/{name}"] = self.v[name]
        return out

    def load_state_tensors(self, state):
        self.t = int(state["step"])
        for name in self.params:
            self.m[name].copy_(state[f"m/{name}"])
            self.v[name].copy_(state[f"v/{name}"])


def make_checkpoint(model, optim: Adam | None = None, train_cfg: TrainConfig | None = None, extra=None):
    tensors = {n: p.detach().clone() for n, p in model.named_parameters()}
    if optim is not None:
        for k, t in optim.state_tensors().items():
            tensors[OPTIM_PREFIX + k] = t.detach().clone()
    config = to_strings(model.cfg)
    if train_cfg is not None:
        config.update(to_strings(train_cfg))
    config.update({k: str(v) for k, v in (extra or {}).items()})
    return Checkpoint(tensors, config)


def model_from_checkpoint(ckpt: Checkpoint, dtype=None):
    """Rebuild a model from its config echo and load its weights."""
    from .checkpoint import restore_model

    cfg = build_config(ModelConfig, ckpt.config, strict=False)
    state = ckpt.model_state()
    if dtype is None:
        dtype = next(iter(state.values())).dtype if state else torch.float32
    model = build_model(cfg, seed=0, dtype=dtype)
    return restore_model(model, ckpt)


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    history: list = field(default_factory=list)  # (step, epoch, lr, loss)


def batch_sampler(pairs, cfg: TrainConfig):
    """Infinite deterministic stream of (lr, hr) float32 batches drawn from ``pairs``."""
    rng = np.random.default_rng(cfg.seed)
    while True:
        lrs, hrs = [], []
        for _ in range(cfg.batch):
            pair = pairs[int(rng.integers(len(pairs)))]
            lr, hr = sample_patches(pair, cfg.patch, 1, rng, augment=cfg.augment)
            lrs.append(lr)
            hrs.append(hr)
        yield np.concatenate(lrs), np.concatenate(hrs)


def train_loop(model, pairs, cfg: TrainConfig, out_dir=None, optim: Adam | None = None, log_every=0):
    """Run ``total_epochs * steps_per_epoch`` Adam steps on L1 loss.

    With ``out_dir`` the loss history is written to ``loss.csv`` and checkpoints
    to ``epoch_XXXX.fmsr`` (every ``checkpoint_every`` epochs) and ``final.fmsr``.
    """
    if not pairs:
        raise ValueError("training needs at least one pair")
    optim = optim or Adam(model.named_parameters(), cfg.beta1, cfg.beta2, cfg.eps)
    history = []
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    model.train()
    dtype = next(model.parameters()).dtype
    stream = batch_sampler(pairs, cfg)
    step = 0
    if cfg.steps_per_epoch > 0:
        for epoch in range(cfg.total_epochs):
            lr = lr_schedule(epoch, cfg)
            for _ in range(cfg.steps_per_epoch):
                lr_np, hr_np = next(stream)
                x = torch.from_numpy(lr_np).to(dtype)
                y = torch.from_numpy(hr_np).to(dtype)
                optim.zero_grad()
                loss = l1_loss(model(x), y)
                if not torch.isfinite(loss):
                    raise NonFiniteError(f"non-finite loss at step {step}", where=step)
                loss.backward()
                optim.step(lr)
                loss_value = loss.item()
                history.append((step, epoch, lr, loss_value))
                if log_every and step % log_every == 0:
                    log.info("step %d epoch %d lr %.3g loss %.6f", step, epoch, lr, loss_value)
                step += 1
            if out_dir and cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0:
                save_checkpoint(
                    os.path.join(out_dir, f"epoch_{epoch + 1:04d}.fmsr"),
                    make_checkpoint(model, optim, cfg, {"step": step}),
                )
    ckpt = make_checkpoint(model, optim, cfg, {"step": step})
    if out_dir:
        save_checkpoint(os.path.join(out_dir, "final.fmsr"), ckpt)
        write_history(os.path.join(out_dir, "loss.csv"), history)
    return TrainResult(ckpt, history)


def write_history(path, history):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "epoch", "lr", "loss"])
        for step, epoch, lr, loss in history:
            w.writerow([step, epoch, repr(lr), repr(loss)])
