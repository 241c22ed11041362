"""Binary model checkpoints.

Layout (little-endian)::

    b"SLIM" | u32 version | u32 header length | JSON header (UTF-8)
    then, per parameter in header order: u32 ndim | u32 dims... | float32 data

The header carries the encoder config, the vocabulary and label
inventories, model options, parameter names and free-form metadata.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .data import LabelMap
from .encoder import EncoderConfig, Vocabulary
from .errors import FormatError
from .model import SlimModel

MAGIC = b"SLIM"
VERSION = 1


def save_checkpoint(model: SlimModel, path, meta: dict | None = None) -> None:
    named = model.named_parameters()
    header = {
        "encoder": model.config.to_dict(),
        "vocab": model.vocab.itos,
        "intents": model.intent_map.labels,
        "tags": model.tag_map.labels,
        "variant": model.variant,
        "head_dropout": model.head_dropout,
        "max_slots": model.max_slots,
        "threshold": model.threshold,
        "si_mode": model.si_mode,
        "params": list(named),
        "meta": meta or {},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(blob)))
        fh.write(blob)
        for tensor in named.values():
            arr = np.ascontiguousarray(tensor.data, dtype="<f4")
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def _read_exact(fh, size: int, what: str) -> bytes:
    raw = fh.read(size)
    if len(raw) != size:
        raise FormatError(f"truncated checkpoint while reading {what}")
    return raw


def read_header(path) -> dict:
    with open(path, "rb") as fh:
        return _read_header(fh)


def _read_header(fh) -> dict:
    if fh.read(4) != MAGIC:
        raise FormatError("not a SLIM checkpoint (bad magic bytes)")
    raw = fh.read(8)
    if len(raw) != 8:
        raise FormatError("truncated checkpoint header")
    version, size = struct.unpack("<II", raw)
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    return json.loads(fh.read(size).decode("utf-8"))


def load_checkpoint(path) -> tuple[SlimModel, dict]:
    """Rebuild a float32 model and return it with the stored metadata."""
    path = Path(path)
    with open(path, "rb") as fh:
        header = _read_header(fh)
        model = SlimModel(
            EncoderConfig(**header["encoder"]),
            Vocabulary.from_list(header["vocab"]),
            LabelMap(header["intents"]),
            LabelMap(header["tags"]),
            variant=header["variant"],
            head_dropout=header["head_dropout"],
            max_slots=header["max_slots"],
            threshold=header["threshold"],
            si_mode=header["si_mode"],
        )
        named = model.named_parameters()
        if list(named) != header["params"]:
            raise FormatError("checkpoint parameter list does not match the model layout")
        for name, tensor in named.items():
            (ndim,) = struct.unpack("<I", _read_exact(fh, 4, name))
            shape = struct.unpack(f"<{ndim}I", _read_exact(fh, 4 * ndim, name))
            if tuple(shape) != tensor.shape:
                raise FormatError(f"{name}: stored shape {shape} != expected {tensor.shape}")
            count = int(np.prod(shape))
            data = np.frombuffer(_read_exact(fh, 4 * count, name), dtype="<f4")
            if data.size != count:
                raise FormatError(f"{name}: truncated parameter data")
            tensor.data = data.reshape(shape).astype(np.float32)
        if fh.read(1):
            raise FormatError("trailing bytes after the last parameter")
    return model, header["meta"]
