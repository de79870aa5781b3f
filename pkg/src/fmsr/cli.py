"""Command-line entry point: ``fmsr {train,sr,eval,bench,erf,selftest}``.

Exit status is 0 on success, 2 on usage or configuration errors and 1 on
runtime failures. ``FMSR_THREADS`` caps the worker threads (default 1, which
keeps every command bitwise reproducible).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import torch

from .config import field_types, read_kv_file, split_config
from .errors import ConfigError, FMSRError

log = logging.getLogger("fmsr")

_MODEL_TRAIN_DOC = "any ModelConfig or TrainConfig field, e.g. --channels 32 --lr0 2e-4"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _config_fields():
    from .model import ModelConfig
    from .training import TrainConfig

    return ModelConfig, TrainConfig, {**field_types(ModelConfig), **field_types(TrainConfig)}


def build_parser():
    p = _Parser(prog="fmsr", description="FMSR super-resolution toolkit: train, infer, evaluate, benchmark.")
    sub = p.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    t = sub.add_parser("train", help="train a model on HR images listed in a manifest")
    t.add_argument("--config", help="key=value file with model and training fields")
    t.add_argument("--data", required=True, help="manifest: one HR image path per line")
    t.add_argument("--out", required=True, help="output directory for checkpoints and loss.csv")
    t.add_argument("--log-every", type=int, default=0, help="log the loss every N steps (0: off)")
    _, _, fields = _config_fields()
    group = t.add_argument_group("config overrides", _MODEL_TRAIN_DOC)
    for name in fields:
        group.add_argument(f"--{name}", f"--{name.replace('_', '-')}", dest=f"cfg_{name}", metavar="V", default=None)

    s = sub.add_parser("sr", help="super-resolve one image")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--input", required=True)
    s.add_argument("--output", required=True)
    s.add_argument("--self-ensemble", action="store_true", help="average over the 8 flips/rotations")

    e = sub.add_parser("eval", help="Y-channel PSNR/SSIM over a folder of HR images")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--hr-dir", required=True)
    e.add_argument("--scale", type=int, default=4)
    e.add_argument("--shave", type=int, default=0, help="border pixels excluded from the metrics")
    e.add_argument("--self-ensemble", action="store_true")
    e.add_argument("--out", required=True, help="CSV report")

    b = sub.add_parser("bench", help="FMB vs self-attention scaling with resolution")
    b.add_argument("--sizes", default="32,48,64,88", help="comma-separated square input sizes")
    b.add_argument("--repeats", type=int, default=5)
    b.add_argument("--fmsr-c", type=int, default=144)
    b.add_argument("--msa-dim", type=int, default=180)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", required=True, help="CSV of size,block,params,flops,time_ms")

    r = sub.add_parser("erf", help="effective receptive field heatmap of a checkpoint")
    r.add_argument("--ckpt", required=True)
    r.add_argument("--input", required=True)
    r.add_argument("--out", required=True, help="PNG heatmap; raw values go to the matching .npy")
    r.add_argument("--log", action="store_true", help="log1p scaling before normalization")

    sub.add_parser("selftest", help="run the gradient-check and invariant suites")
    return p


def _load_model(path):
    from .checkpoint import load_checkpoint
    from .training import model_from_checkpoint

    return model_from_checkpoint(load_checkpoint(path)).eval()


def cmd_train(args):
    from .data import load_image, make_pairs, read_manifest
    from .training import train_loop

    model_cls, train_cls, fields = _config_fields()
    values = read_kv_file(args.config) if args.config else {}
    for name in fields:
        v = getattr(args, f"cfg_{name}")
        if v is not None:
            values[name] = v
    mcfg, tcfg = split_config(values, model_cls, train_cls)
    paths = read_manifest(args.data)
    if not paths:
        raise ConfigError(f"manifest {args.data} lists no images")
    pairs = make_pairs([load_image(p) for p in paths], mcfg.scale, min_lr_size=tcfg.patch)
    if not pairs:
        raise FMSRError(f"no image in {args.data} is large enough for {tcfg.patch}px LR patches")
    from .model import build_model

    model = build_model(mcfg, seed=tcfg.seed)
    result = train_loop(model, pairs, tcfg, out_dir=args.out, log_every=args.log_every)
    if result.history:
        log.info("trained %d steps, final loss %.6f", len(result.history), result.history[-1][3])
    log.info("wrote %s", os.path.join(args.out, "final.fmsr"))
    return 0


def cmd_sr(args):
    from .data import load_image, save_image, to_float
    from .evaluate import infer

    model = _load_model(args.ckpt)
    sr = infer(model, to_float(load_image(args.input)), ensemble=args.self_ensemble)
    save_image(sr, args.output)
    return 0


def cmd_eval(args):
    from .evaluate import evaluate_dir

    model = _load_model(args.ckpt)
    if model.cfg.scale != args.scale:
        raise ConfigError(f"checkpoint is x{model.cfg.scale} but --scale is {args.scale}")
    report = evaluate_dir(model, args.hr_dir, args.scale, args.shave, args.self_ensemble, args.out)
    m = report.means()
    print(f"{len(report.rows)} images  PSNR {m['psnr']:.3f} dB (bicubic {m['psnr_bicubic']:.3f})  "
          f"SSIM {m['ssim']:.4f} (bicubic {m['ssim_bicubic']:.4f})")
    return 0


def cmd_bench(args):
    from .bench import bench_scaling, summarize, write_bench_csv

    try:
        sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
    except ValueError as exc:
        raise ConfigError(f"--sizes must be comma-separated integers: {args.sizes!r}") from exc
    if len(sizes) < 2:
        raise ConfigError("--sizes needs at least two sizes to fit a scaling exponent")
    records = bench_scaling(sizes, args.fmsr_c, args.msa_dim, repeats=args.repeats, seed=args.seed)
    write_bench_csv(records, args.out)
    print(summarize(records))
    return 0


def cmd_erf(args):
    from .data import load_image, to_float
    from .evaluate import erf_map

    model = _load_model(args.ckpt)
    dtype = next(model.parameters()).dtype
    x = torch.from_numpy(to_float(load_image(args.input))).to(dtype)
    erf_map(model, x, args.out, log_scale=args.log)
    return 0


def cmd_selftest(args):
    from .selftest import run_all

    return 0 if run_all() else 1


COMMANDS = {
    "train": cmd_train,
    "sr": cmd_sr,
    "eval": cmd_eval,
    "bench": cmd_bench,
    "erf": cmd_erf,
    "selftest": cmd_selftest,
}


def _set_threads():
    text = os.environ.get("FMSR_THREADS", "1")
    try:
        n = int(text)
        if n < 1:
            raise ValueError
    except ValueError as exc:
        raise ConfigError(f"FMSR_THREADS must be a positive integer, got {text!r}") from exc
    torch.set_num_threads(n)


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _set_threads()
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"fmsr: config error: {exc}", file=sys.stderr)
        return 2
    except (FMSRError, OSError, ValueError, RuntimeError) as exc:
        print(f"fmsr: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
