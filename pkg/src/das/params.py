"""Named trainable parameters, the Adam optimizer, and checkpoint I/O.

Each entry owns four same-shaped float64 buffers (value, grad, and the
two Adam moments) plus a per-entry step count. Gradient buffers are
zeroed by `adam_step`, not by callers.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Node, NumericFault, as_tensor, param_node

CHECKPOINT_MAGIC = b"DASCKPT1"


@dataclass
class ParamEntry:
    value: np.ndarray
    grad: np.ndarray
    adam_m: np.ndarray
    adam_v: np.ndarray
    step: int = 0


@dataclass
class ParameterStore:
    """Ordered map of unique names to trainable tensors with Adam state."""

    entries: dict[str, ParamEntry] = field(default_factory=dict)

    def add(self, name: str, value) -> None:
        if name in self.entries:
            raise ValueError(f"duplicate parameter name '{name}'")
        v = as_tensor(value).copy()
        self.entries[name] = ParamEntry(
            value=v,
            grad=np.zeros_like(v),
            adam_m=np.zeros_like(v),
            adam_v=np.zeros_like(v),
        )

    def names(self) -> list[str]:
        return list(self.entries)

    def value(self, name: str) -> np.ndarray:
        return self.entries[name].value

    def node(self, name: str) -> Node:
        """Graph leaf sharing this entry's grad buffer, so backward()
        accumulates straight into the store."""
        entry = self.entries[name]
        return param_node(entry.value, entry.grad)

    def zero_grads(self) -> None:
        for entry in self.entries.values():
            entry.grad[...] = 0.0

    def copy_values(self) -> dict[str, np.ndarray]:
        return {name: e.value.copy() for name, e in self.entries.items()}

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        for name, v in values.items():
            self.entries[name].value[...] = v


def adam_step(
    store: ParameterStore,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """In-place Adam update with bias correction; zeroes all grad buffers."""
    for name, e in store.entries.items():
        if not np.all(np.isfinite(e.grad)):
            raise NumericFault(f"non-finite gradient for parameter '{name}'")
        e.step += 1
        e.adam_m[...] = beta1 * e.adam_m + (1.0 - beta1) * e.grad
        e.adam_v[...] = beta2 * e.adam_v + (1.0 - beta2) * e.grad * e.grad
        m_hat = e.adam_m / (1.0 - beta1**e.step)
        v_hat = e.adam_v / (1.0 - beta2**e.step)
        e.value -= lr * m_hat / (np.sqrt(v_hat) + eps)
        e.grad[...] = 0.0


# ---------------------------------------------------------------------------
# checkpoint format: 8-byte magic, u64-LE header length, UTF-8 JSON header
# listing (name, shape, byte offset) per entry, then raw little-endian
# float64 payload. Round-trips bit-exactly.

def save_checkpoint(store: ParameterStore, path, meta: dict | None = None) -> None:
    entries = []
    payload = bytearray()
    for name, e in store.entries.items():
        raw = np.ascontiguousarray(e.value, dtype="<f8").tobytes()
        entries.append({"name": name, "shape": list(e.value.shape), "offset": len(payload)})
        payload.extend(raw)
    header = json.dumps(
        {"entries": entries, "meta": meta or {}},
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        fh.write(bytes(payload))


def load_checkpoint(path) -> tuple[ParameterStore, dict]:
    """Read a checkpoint back as (store, meta). Adam state starts fresh."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise ValueError(f"bad magic in checkpoint '{path}'")
    pos = len(CHECKPOINT_MAGIC)
    if len(blob) < pos + 8:
        raise ValueError(f"truncated checkpoint '{path}': missing header length")
    (header_len,) = struct.unpack_from("<Q", blob, pos)
    pos += 8
    if len(blob) < pos + header_len:
        raise ValueError(
            f"truncated checkpoint '{path}': header expects {header_len} bytes, "
            f"{len(blob) - pos} available"
        )
    header = json.loads(blob[pos : pos + header_len].decode("utf-8"))
    payload = blob[pos + header_len :]

    store = ParameterStore()
    for item in header["entries"]:
        shape = tuple(item["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = item["offset"]
        end = start + 8 * count
        if end > len(payload):
            raise ValueError(
                f"truncated checkpoint '{path}': entry '{item['name']}' expects "
                f"{end} payload bytes, {len(payload)} available"
            )
        value = np.frombuffer(payload[start:end], dtype="<f8").reshape(shape)
        store.add(item["name"], value)
    return store, header.get("meta", {})
