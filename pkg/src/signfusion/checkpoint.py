"""Binary checkpoints: config + vocabulary snapshot and a named-tensor table.

Layout: magic "SLTCKPT1", u32 format version, a length-prefixed UTF-8
snapshot (config lines, a #STATE section with counters, a #VOCAB section
with the vocabulary), u32 tensor count, then per tensor a length-prefixed
name, u32 rank, u32 dims, and float64 little-endian data. Tensor names are
written in sorted order so save -> load -> save is byte-identical.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .config import ModelConfig, parse_config, serialize_config
from .errors import (
    CheckpointMagicError,
    CheckpointShapeError,
    CheckpointTruncatedError,
    CheckpointVersionError,
)
from .model import TranslationModel
from .tokenizer import Vocabulary, parse_vocabulary, serialize_vocabulary
from .training import AdamOptimizer, TrainState

MAGIC = b"SLTCKPT1"
VERSION = 1
STATE_SENTINEL = "#STATE"
VOCAB_SENTINEL = "#VOCAB"


@dataclass
class Checkpoint:
    version: int
    config: ModelConfig
    state: TrainState
    vocab: Vocabulary
    tensors: dict


def _snapshot(config: ModelConfig, state: TrainState, vocab: Vocabulary) -> str:
    lines = [serialize_config(config).rstrip("\n")]
    lines.append(STATE_SENTINEL)
    lines.append(f"epoch = {state.epoch}")
    lines.append(f"step = {state.step}")
    lines.append(f"best_bleu4 = {state.best_bleu4}")
    lines.append(f"best_checkpoint = {state.best_checkpoint or '-'}")
    lines.append(VOCAB_SENTINEL)
    lines.append(serialize_vocabulary(vocab).rstrip("\n"))
    return "\n".join(lines) + "\n"


def _parse_snapshot(text: str):
    if STATE_SENTINEL not in text or VOCAB_SENTINEL not in text:
        raise CheckpointTruncatedError("snapshot is missing its sections")
    config_text, rest = text.split(STATE_SENTINEL + "\n", 1)
    state_text, vocab_text = rest.split(VOCAB_SENTINEL + "\n", 1)
    config = parse_config(config_text, source="<checkpoint>")
    state = TrainState()
    for line in state_text.splitlines():
        if not line.strip():
            continue
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key == "epoch":
            state.epoch = int(value)
        elif key == "step":
            state.step = int(value)
        elif key == "best_bleu4":
            state.best_bleu4 = float(value)
        elif key == "best_checkpoint":
            state.best_checkpoint = None if value == "-" else value
    vocab = parse_vocabulary(vocab_text, source="<checkpoint>")
    return config, state, vocab


def save_checkpoint(path, model: TranslationModel, vocab: Vocabulary,
                    state: TrainState, optimizer: AdamOptimizer | None = None) -> None:
    tensors: dict[str, np.ndarray] = {
        p.name: p.data for p in model.store.parameters()
    }
    if optimizer is not None:
        for name, m in optimizer.m.items():
            tensors[f"opt.m.{name}"] = m
        for name, v in optimizer.v.items():
            tensors[f"opt.v.{name}"] = v

    snapshot = _snapshot(model.config, state, vocab).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<I", len(snapshot)))
        fh.write(snapshot)
        fh.write(struct.pack("<I", len(tensors)))
        for name in sorted(tensors):
            encoded = name.encode("utf-8")
            arr = np.ascontiguousarray(tensors[name], dtype="<f8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes(order="C"))


class _Reader:
    def __init__(self, blob: bytes, source: str):
        self.blob = blob
        self.pos = 0
        self.source = source

    def take(self, count: int) -> bytes:
        if self.pos + count > len(self.blob):
            raise CheckpointTruncatedError(
                f"{self.source}: truncated at byte {self.pos} "
                f"(needed {count} more)"
            )
        out = self.blob[self.pos : self.pos + count]
        self.pos += count
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        blob = fh.read()
    reader = _Reader(blob, str(path))
    magic = reader.take(len(MAGIC))
    if magic != MAGIC:
        raise CheckpointMagicError(
            f"{path}: bad magic {magic!r}, expected {MAGIC!r}"
        )
    version = reader.u32()
    if version != VERSION:
        raise CheckpointVersionError(
            f"{path}: unsupported format version {version}"
        )
    snapshot = reader.take(reader.u32()).decode("utf-8")
    config, state, vocab = _parse_snapshot(snapshot)
    tensors = {}
    for _ in range(reader.u32()):
        name = reader.take(reader.u32()).decode("utf-8")
        rank = reader.u32()
        dims = struct.unpack(f"<{rank}I", reader.take(4 * rank))
        size = int(np.prod(dims)) if rank else 1
        data = np.frombuffer(reader.take(8 * size), dtype="<f8")
        tensors[name] = data.reshape(dims).astype(np.float64)
    if reader.pos != len(blob):
        raise CheckpointTruncatedError(
            f"{path}: {len(blob) - reader.pos} trailing bytes after tensors"
        )
    return Checkpoint(version=version, config=config, state=state,
                      vocab=vocab, tensors=tensors)


def restore_model(ckpt: Checkpoint):
    """Rebuild model + optimizer from a checkpoint; shapes must agree.

    Returns (model, vocab, state, optimizer).
    """
    model = TranslationModel(ckpt.config, vocab_size=len(ckpt.vocab))
    optimizer = AdamOptimizer(model.store.parameters())
    seen = set()
    for p in model.store.parameters():
        if p.name not in ckpt.tensors:
            raise CheckpointShapeError(f"checkpoint is missing tensor {p.name!r}")
        stored = ckpt.tensors[p.name]
        if stored.shape != p.data.shape:
            raise CheckpointShapeError(
                f"tensor {p.name!r} has shape {stored.shape} but the config "
                f"builds {p.data.shape}"
            )
        p.data[...] = stored
        seen.add(p.name)
        for prefix, table in (("opt.m.", optimizer.m), ("opt.v.", optimizer.v)):
            full = prefix + p.name
            if full in ckpt.tensors:
                moment = ckpt.tensors[full]
                if moment.shape != p.data.shape:
                    raise CheckpointShapeError(
                        f"optimizer moment {full!r} has shape {moment.shape}, "
                        f"expected {p.data.shape}"
                    )
                table[p.name][...] = moment
                seen.add(full)
    unknown = set(ckpt.tensors) - seen
    if unknown:
        raise CheckpointShapeError(
            f"checkpoint carries tensors unknown to the config: "
            f"{sorted(unknown)[:3]}..."
        )
    return model, ckpt.vocab, ckpt.state, optimizer
