"""Bit-exact checkpointing.

A checkpoint is a directory holding manifest.json (format version, step,
model config, tensor listing) plus tensors.bin, the tensors' raw
little-endian bytes concatenated in manifest order. Optimizer moments are
stored alongside the parameters so a resumed run continues on the exact
trajectory. Directories are written to a temp path and renamed, so a
killed run never leaves a half-written checkpoint behind.
"""

from __future__ import annotations

import json
import os
import shutil
from dataclasses import asdict

import numpy as np
import torch

from .errors import DataError
from .model import ModelConfig, ModelState
from .optim import AdamState

FORMAT_VERSION = 1

_DTYPES = {"float32": "<f4", "float64": "<f8"}


def _tensor_items(state: ModelState, opt: AdamState | None):
    for name, p in state.params.items():
        yield name, p
    if opt is not None:
        for name in state.params:
            if name in opt.m:
                yield f"adam.m.{name}", opt.m[name]
                yield f"adam.v.{name}", opt.v[name]


def save_checkpoint(path: str, state: ModelState, opt: AdamState | None = None) -> None:
    tmp = path + ".tmp"
    if os.path.exists(tmp):
        shutil.rmtree(tmp)
    os.makedirs(tmp)
    listing = []
    with open(os.path.join(tmp, "tensors.bin"), "wb") as f:
        for name, t in _tensor_items(state, opt):
            a = t.detach().numpy()
            dt = str(a.dtype)
            if dt not in _DTYPES:
                raise DataError(f"tensor {name} has unsupported dtype {dt}")
            f.write(np.ascontiguousarray(a).astype(_DTYPES[dt]).tobytes())
            listing.append({"name": name, "dtype": dt, "shape": list(a.shape)})
    manifest = {
        "format_version": FORMAT_VERSION,
        "step": state.step,
        "adam_t": 0 if opt is None else opt.t,
        "model_config": asdict(state.config),
        "tensors": listing,
    }
    with open(os.path.join(tmp, "manifest.json"), "w", encoding="utf-8") as f:
        json.dump(manifest, f, sort_keys=True, indent=1)
        f.write("\n")
    if os.path.exists(path):
        shutil.rmtree(path)
    os.replace(tmp, path)


def load_checkpoint(path: str) -> tuple[ModelState, AdamState]:
    mpath = os.path.join(path, "manifest.json")
    if not os.path.isfile(mpath):
        raise DataError(f"{path}: not a checkpoint directory")
    with open(mpath, encoding="utf-8") as f:
        manifest = json.load(f)
    if manifest.get("format_version") != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint format "
                        f"{manifest.get('format_version')!r}")
    config = ModelConfig(**manifest["model_config"])
    params: dict[str, torch.Tensor] = {}
    opt = AdamState(t=manifest.get("adam_t", 0))
    with open(os.path.join(path, "tensors.bin"), "rb") as f:
        blob = f.read()
    off = 0
    for item in manifest["tensors"]:
        dt = _DTYPES.get(item["dtype"])
        if dt is None:
            raise DataError(f"{path}: unsupported tensor dtype {item['dtype']!r}")
        shape = tuple(item["shape"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * int(dt[-1])
        if off + nbytes > len(blob):
            raise DataError(f"{path}: tensors.bin shorter than manifest declares")
        a = np.frombuffer(blob[off: off + nbytes], dtype=dt).reshape(shape).copy()
        off += nbytes
        t = torch.from_numpy(a)
        name = item["name"]
        if name.startswith("adam.m."):
            opt.m[name[len("adam.m."):]] = t
        elif name.startswith("adam.v."):
            opt.v[name[len("adam.v."):]] = t
        else:
            t.requires_grad_(True)
            params[name] = t
    if off != len(blob):
        raise DataError(f"{path}: tensors.bin longer than manifest declares")
    state = ModelState(config, params, step=int(manifest["step"]))
    return state, opt
