"""Checkpoint files: a JSON header line plus a raw little-endian float64 payload.

The header carries the format version, variant config, normalizer statistics,
training metadata and a tensor manifest (name, shape, byte offset); the
payload holds the tensor values. Saving is canonical, so save -> load -> save
reproduces the file byte for byte.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .models import TrajectoryModel, VariantConfig
from .traffic import Normalizer

FORMAT_VERSION = 1
_KIND = "rivercast-checkpoint"


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    config: VariantConfig
    normalizer: Normalizer
    tensors: dict[str, np.ndarray]
    meta: dict = field(default_factory=dict)

    def to_model(self) -> TrajectoryModel:
        model = TrajectoryModel.build(self.config, self.normalizer)
        expected = set(model.parameters())
        got = set(self.tensors)
        if expected != got:
            raise CheckpointError(
                f"checkpoint tensors do not match variant {self.config.variant}: "
                f"missing {sorted(expected - got)}, unexpected {sorted(got - expected)}"
            )
        for name, p in model.parameters().items():
            arr = self.tensors[name]
            if arr.shape != p.data.shape:
                raise CheckpointError(f"tensor {name} has shape {arr.shape}, expected {p.data.shape}")
            p.data = arr.copy()
        return model


def from_model(model: TrajectoryModel, meta: dict | None = None) -> Checkpoint:
    return Checkpoint(
        config=model.config,
        normalizer=model.normalizer,
        tensors={name: p.data.copy() for name, p in model.parameters().items()},
        meta=dict(meta or {}),
    )


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    names = sorted(ckpt.tensors)
    manifest = []
    offset = 0
    chunks = []
    for name in names:
        arr = np.ascontiguousarray(ckpt.tensors[name], dtype="<f8")
        manifest.append({"name": name, "shape": list(arr.shape), "offset": offset})
        chunk = arr.tobytes()
        chunks.append(chunk)
        offset += len(chunk)
    payload = b"".join(chunks)
    header = {
        "kind": _KIND,
        "format_version": FORMAT_VERSION,
        "config": ckpt.config.to_dict(),
        "normalizer": ckpt.normalizer.to_dict(),
        "meta": ckpt.meta,
        "tensors": manifest,
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
    }
    header_line = json.dumps(header, sort_keys=True, separators=(",", ":")) + "\n"
    Path(path).write_bytes(header_line.encode("utf-8") + payload)


def load_checkpoint(path, expect_variant: str | None = None) -> Checkpoint:
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise CheckpointError(f"{path}: not a checkpoint file (no header line)")
    try:
        header = json.loads(raw[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header ({exc})") from exc
    if not isinstance(header, dict) or header.get("kind") != _KIND:
        raise CheckpointError(f"{path}: not a checkpoint file")
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported format version {header.get('format_version')}"
        )
    payload = raw[nl + 1 :]
    if hashlib.sha256(payload).hexdigest() != header.get("payload_sha256"):
        raise CheckpointError(f"{path}: payload checksum mismatch")
    tensors: dict[str, np.ndarray] = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        stop = start + count * 8
        if stop > len(payload):
            raise CheckpointError(f"{path}: manifest points outside the payload")
        tensors[entry["name"]] = np.frombuffer(payload[start:stop], dtype="<f8").reshape(shape).copy()
    config = VariantConfig.from_dict(header["config"])
    if expect_variant is not None and config.variant != expect_variant:
        raise CheckpointError(
            f"{path}: checkpoint variant {config.variant} does not match requested {expect_variant}"
        )
    return Checkpoint(
        config=config,
        normalizer=Normalizer.from_dict(header["normalizer"]),
        tensors=tensors,
        meta=header.get("meta", {}),
    )
