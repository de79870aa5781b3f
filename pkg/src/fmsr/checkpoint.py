"""Named-tensor checkpoint archive.

Layout (header is UTF-8 text, payload is raw little-endian bytes)::

    FMSRCKPT
    version 1
    config <number of lines>
    key=value
    ...
    tensors <count>
    <name> <dtype> <d0>×<d1>×... <byte offset>
    ...
    end
    <payload: tensors back to back in header order>

Scalars use ``-`` for their dimension field. Optimizer state is stored under
the ``optim/`` name prefix.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, field

import numpy as np
import torch

from .errors import CheckpointError

MAGIC = b"FMSRCKPT\n"
VERSION = 1
OPTIM_PREFIX = "optim/"

_DTYPES = {
    "float32": (torch.float32, np.dtype("<f4")),
    "float64": (torch.float64, np.dtype("<f8")),
    "int64": (torch.int64, np.dtype("<i8")),
}
_NAMES = {v[0]: k for k, v in _DTYPES.items()}


@dataclass
class Checkpoint:
    tensors: dict = field(default_factory=dict)  # name -> torch.Tensor
    config: dict = field(default_factory=dict)  # key -> str

    def model_state(self):
        return {k: v for k, v in self.tensors.items() if not k.startswith(OPTIM_PREFIX)}

    def optim_state(self):
        n = len(OPTIM_PREFIX)
        return {k[n:]: v for k, v in self.tensors.items() if k.startswith(OPTIM_PREFIX)}


def _format_dims(shape):
    return "×".join(str(d) for d in shape) if len(shape) else "-"


def _parse_dims(text):
    return () if text == "-" else tuple(int(d) for d in text.split("×"))


def encode(ckpt: Checkpoint) -> bytes:
    payload = io.BytesIO()
    entries = []
    for name, t in ckpt.tensors.items():
        if any(ch.isspace() for ch in name):
            raise CheckpointError(f"tensor name {name!r} contains whitespace")
        t = t.detach().cpu().contiguous()
        if t.dtype not in _NAMES:
            raise CheckpointError(f"unsupported dtype {t.dtype} for {name}")
        dname = _NAMES[t.dtype]
        entries.append(f"{name} {dname} {_format_dims(t.shape)} {payload.tell()}")
        payload.write(t.numpy().astype(_DTYPES[dname][1], copy=False).tobytes())
    cfg_lines = []
    for k, v in ckpt.config.items():
        v = str(v)
        if "\n" in v or "=" in k or "\n" in k:
            raise CheckpointError(f"config entry {k!r} cannot be serialized")
        cfg_lines.append(f"{k}={v}")
    header = [f"version {VERSION}", f"config {len(cfg_lines)}", *cfg_lines, f"tensors {len(entries)}", *entries, "end"]
    return MAGIC + ("\n".join(header) + "\n").encode("utf-8") + payload.getvalue()


def decode(data: bytes, source="<bytes>") -> Checkpoint:
    if not data.startswith(MAGIC):
        raise CheckpointError(f"{source}: bad magic, not a checkpoint")
    pos = len(MAGIC)

    def line():
        nonlocal pos
        end = data.find(b"\n", pos)
        if end < 0:
            raise CheckpointError(f"{source}: truncated header")
        text = data[pos:end].decode("utf-8")
        pos = end + 1
        return text

    try:
        key, ver = line().split()
        if key != "version" or int(ver) != VERSION:
            raise CheckpointError(f"{source}: unsupported version line")
        key, count = line().split()
        if key != "config":
            raise CheckpointError(f"{source}: expected config section")
        config = {}
        for _ in range(int(count)):
            k, _, v = line().partition("=")
            config[k] = v
        key, count = line().split()
        if key != "tensors":
            raise CheckpointError(f"{source}: expected tensors section")
        entries = [line().split(" ") for _ in range(int(count))]
        if line() != "end":
            raise CheckpointError(f"{source}: missing header terminator")
    except (ValueError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"{source}: corrupt header ({exc})") from exc

    body = data[pos:]
    tensors = {}
    for entry in entries:
        if len(entry) != 4:
            raise CheckpointError(f"{source}: malformed tensor entry {' '.join(entry)!r}")
        name, dname, dims, offset = entry
        if dname not in _DTYPES:
            raise CheckpointError(f"{source}: tensor {name} has unknown dtype {dname}")
        try:
            shape, offset = _parse_dims(dims), int(offset)
        except ValueError as exc:
            raise CheckpointError(f"{source}: tensor {name} has a malformed shape or offset") from exc
        tdtype, ndtype = _DTYPES[dname]
        nbytes = int(np.prod(shape, dtype=np.int64)) * ndtype.itemsize
        if offset < 0 or offset + nbytes > len(body):
            raise CheckpointError(f"{source}: tensor {name} payload out of range (shape field {dims})")
        arr = np.frombuffer(body, dtype=ndtype, count=nbytes // ndtype.itemsize, offset=offset)
        tensors[name] = torch.from_numpy(arr.reshape(shape).astype(ndtype.newbyteorder("="), copy=True)).to(tdtype)
    return Checkpoint(tensors, config)


def save_checkpoint(path, ckpt: Checkpoint):
    data = encode(ckpt)
    with open(path, "wb") as fh:
        fh.write(data)
    return os.fspath(path)


def load_checkpoint(path) -> Checkpoint:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    return decode(data, os.fspath(path))


def restore_model(model, ckpt: Checkpoint, strict_config=True):
    """Copy checkpoint tensors into ``model`` after validating names, shapes and config echo."""
    if strict_config and hasattr(model, "cfg"):
        for key, value in model.cfg.to_dict().items():
            if key in ckpt.config and ckpt.config[key] != str(value):
                raise CheckpointError(
                    f"config mismatch for {key}: checkpoint has {ckpt.config[key]}, model has {value}"
                )
    state = ckpt.model_state()
    params = dict(model.named_parameters())
    missing = sorted(set(params) - set(state))
    extra = sorted(set(state) - set(params))
    if missing or extra:
        raise CheckpointError(f"tensor name mismatch; missing {missing[:5]}, unexpected {extra[:5]}")
    for name, p in params.items():
        t = state[name]
        if tuple(t.shape) != tuple(p.shape):
            raise CheckpointError(f"tensor {name}: checkpoint shape {tuple(t.shape)} != model shape {tuple(p.shape)}")
    with torch.no_grad():
        for name, p in params.items():
            p.copy_(state[name].to(p.dtype))
    return model
