"""``RFA1`` checkpoints: a JSON metadata header followed by named f32 blocks.

Layout (little-endian): ``b"RFA1"``, version ``u16``, metadata length ``u32``
and UTF-8 JSON, block count ``u32``, then per block the name length ``u32``,
UTF-8 name, rank ``u32``, ``rank`` dims ``u32`` and the ``f32`` data.
"""
from __future__ import annotations

import json
import struct
from typing import Dict, Tuple

import numpy as np
import torch

from ..core.formats import FormatError
from ..model import ModelConfig, RFActionModel
from .state import ModelState

MAGIC = b"RFA1"
VERSION = 1
OPTIM_PREFIX = "optim/"


def pack_checkpoint(blocks: Dict[str, np.ndarray], meta: dict | None = None) -> bytes:
    meta_bytes = json.dumps(meta or {}, sort_keys=True).encode()
    out = [MAGIC, struct.pack("<HI", VERSION, len(meta_bytes)), meta_bytes, struct.pack("<I", len(blocks))]
    for name, arr in blocks.items():
        arr = np.asarray(arr)
        if not np.issubdtype(arr.dtype, np.floating):
            raise ValueError(f"block {name!r} is not floating point")
        nb = name.encode()
        out.append(struct.pack("<I", len(nb)) + nb)
        out.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        out.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.pos = data, 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(f"truncated checkpoint while reading {what}", field=what)
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]


def unpack_checkpoint(data: bytes) -> Tuple[Dict[str, np.ndarray], dict]:
    r = _Reader(data)
    if r.take(4, "magic") != MAGIC:
        raise FormatError("not an RFA1 checkpoint", field="magic")
    version = struct.unpack("<H", r.take(2, "version"))[0]
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", field="version")
    try:
        meta = json.loads(r.take(r.u32("meta_len"), "meta").decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"bad metadata: {exc}", field="meta") from None
    blocks: Dict[str, np.ndarray] = {}
    for _ in range(r.u32("n_blocks")):
        try:
            name = r.take(r.u32("name_len"), "name").decode()
        except UnicodeDecodeError:
            raise FormatError("block name is not UTF-8", field="name") from None
        rank = r.u32("rank")
        dims = struct.unpack(f"<{rank}I", r.take(4 * rank, "dims"))
        count = int(np.prod(dims, dtype=np.int64))
        raw = r.take(4 * count, f"data of {name}")
        if name in blocks:
            raise FormatError(f"duplicate block {name!r}", field="name")
        blocks[name] = np.frombuffer(raw, dtype="<f4").reshape(dims).copy()
    if r.pos != len(data):
        raise FormatError(f"{len(data) - r.pos} trailing bytes after last block")
    return blocks, meta


def write_checkpoint(path, blocks: Dict[str, np.ndarray], meta: dict | None = None) -> None:
    with open(path, "wb") as fh:
        fh.write(pack_checkpoint(blocks, meta))


def read_checkpoint(path) -> Tuple[Dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        data = fh.read()
    try:
        return unpack_checkpoint(data)
    except FormatError as exc:
        raise FormatError(exc.message, exc.line, exc.field, path) from None


def state_blocks(state: ModelState) -> Dict[str, np.ndarray]:
    blocks = {n: p.detach().cpu().numpy() for n, p in state.model.named_parameters()}
    for n, val in state.optimizer_tensors().items():
        blocks[OPTIM_PREFIX + n] = val.detach().cpu().numpy()
    return blocks


def save_state(path, state: ModelState, extra: dict | None = None) -> None:
    meta = {"model": state.model.cfg.to_dict(), "step": state.step, "lr": state.base_lr,
            "total_steps": state.total_steps, "optimizer": state.kind,
            "momentum": state.momentum,
            **(extra or {})}
    write_checkpoint(path, state_blocks(state), meta)


def load_model(path) -> Tuple[RFActionModel, dict]:
    model, meta, _ = _load(path)
    return model, meta


def load_state(path) -> ModelState:
    model, meta, blocks = _load(path)
    state = ModelState(model, meta.get("lr", 1e-3), meta.get("momentum", 0.9), meta.get("total_steps", 0),
                       meta.get("optimizer", "adam"))
    state.step = int(meta.get("step", 0))
    state.load_optimizer_tensors({n[len(OPTIM_PREFIX):]: torch.from_numpy(a)
                                  for n, a in blocks.items() if n.startswith(OPTIM_PREFIX)})
    return state


def _load(path):
    blocks, meta = read_checkpoint(path)
    try:
        model = RFActionModel(ModelConfig.from_dict(meta.get("model", {})))
    except (TypeError, ValueError) as exc:
        raise FormatError(f"bad model config: {exc}", field="meta", path=path) from None
    params = dict(model.named_parameters())
    for n, p in params.items():
        if n not in blocks:
            raise FormatError(f"missing parameter block {n!r}", field="name", path=path)
        if tuple(blocks[n].shape) != tuple(p.shape):
            raise FormatError(f"block {n!r} has shape {blocks[n].shape}, expected {tuple(p.shape)}", path=path)
        with torch.no_grad():
            p.copy_(torch.from_numpy(blocks[n]))
    unknown = [n for n in blocks if n not in params and not n.startswith(OPTIM_PREFIX)]
    if unknown:
        raise FormatError(f"unknown parameter blocks {unknown[:3]}", field="name", path=path)
    model.eval()
    return model, meta, blocks
