"""Synthetic sequence datasets with planted informative frames.

Each item is Gaussian noise with `signal_frames` randomly placed frames
overwritten by a class-specific pattern (a constant intensity level or
an oriented linear ramp), zero-padded to T_max. Ground-truth signal
positions ride along so selection quality can be measured directly.
Frames are stored as little-endian float32; computation upcasts to
float64 at batch time.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from .features import FrameSequence
from .rng import RandomStream

DATASET_MAGIC = b"DASDATA1"
SIGNAL_KINDS = ("intensity-level", "oriented-gradient")
SPLIT_FRACTIONS = {"train": 0.70, "val": 0.15, "test": 0.15}


@dataclass
class SynthSpec:
    num_items: int = 600
    num_classes: int = 5
    T_min: int = 12
    T_max: int = 16
    C: int = 1
    H: int = 16
    W: int = 16
    signal_frames: int = 3
    noise_std: float = 0.25
    signal_kind: str = "intensity-level"
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError("need at least two classes")
        if not 1 <= self.T_min <= self.T_max:
            raise ValueError("need 1 <= T_min <= T_max")
        if self.signal_frames > self.T_min:
            raise ValueError(
                f"signal_frames={self.signal_frames} exceeds T_min={self.T_min}"
            )
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        if self.signal_kind not in SIGNAL_KINDS:
            raise ValueError(f"signal_kind must be one of {SIGNAL_KINDS}")


@dataclass
class DataItem:
    item_id: int
    frames: np.ndarray          # [T_max, C, H, W] float32
    label: int
    valid_len: int
    signal_positions: tuple
    split: str


@dataclass
class Dataset:
    spec: SynthSpec
    items: list = field(default_factory=list)

    def split_indices(self, split: str) -> list[int]:
        return [it.item_id for it in self.items if it.split == split]

    def batch(self, indices) -> tuple[FrameSequence, np.ndarray, list]:
        """Stack items into a float64 FrameSequence plus labels/positions."""
        chosen = [self.items[i] for i in indices]
        frames = np.stack([it.frames for it in chosen]).astype(np.float64)
        valid = np.array([it.valid_len for it in chosen])
        labels = np.array([it.label for it in chosen], dtype=np.int64)
        positions = [it.signal_positions for it in chosen]
        return FrameSequence(frames, valid), labels, positions


def class_pattern(spec: SynthSpec, label: int) -> np.ndarray:
    """Noise-free signal frame for one class -> [C, H, W] float64."""
    if spec.signal_kind == "intensity-level":
        level = (label + 1) / spec.num_classes
        return np.full((spec.C, spec.H, spec.W), level)
    angle = label * np.pi / spec.num_classes
    u = np.linspace(-1.0, 1.0, spec.W)[None, :]
    v = np.linspace(-1.0, 1.0, spec.H)[:, None]
    ramp = np.cos(angle) * u + np.sin(angle) * v
    ramp = (ramp - ramp.min()) / (ramp.max() - ramp.min())
    return np.broadcast_to(ramp, (spec.C, spec.H, spec.W)).copy()


def generate(spec: SynthSpec) -> Dataset:
    """Deterministic dataset: round-robin labels, shuffled 70/15/15 split."""
    master = RandomStream(spec.seed).derive("dataset")
    n = spec.num_items
    split_perm = master.derive("splits").permutation(n)
    n_train = int(SPLIT_FRACTIONS["train"] * n)
    n_val = int(SPLIT_FRACTIONS["val"] * n)
    split_of = {}
    for rank, item_id in enumerate(split_perm):
        if rank < n_train:
            split_of[int(item_id)] = "train"
        elif rank < n_train + n_val:
            split_of[int(item_id)] = "val"
        else:
            split_of[int(item_id)] = "test"

    items = []
    for i in range(n):
        stream = master.derive(f"item-{i}")
        label = i % spec.num_classes
        valid_len = int(stream.integers(spec.T_min, spec.T_max + 1))
        frames = np.zeros((spec.T_max, spec.C, spec.H, spec.W))
        frames[:valid_len] = stream.normal(
            (valid_len, spec.C, spec.H, spec.W), std=spec.noise_std
        )
        positions = stream.choose(valid_len, spec.signal_frames)
        frames[positions] += class_pattern(spec, label)
        items.append(
            DataItem(
                item_id=i,
                frames=frames.astype(np.float32),
                label=label,
                valid_len=valid_len,
                signal_positions=tuple(int(p) for p in positions),
                split=split_of[i],
            )
        )
    return Dataset(spec=spec, items=items)


# ---------------------------------------------------------------------------
# on-disk format: 8-byte magic, u64-LE header length, JSON header echoing
# the generation spec and indexing each item, then float32-LE payloads.

def write_dataset(dataset: Dataset, path) -> None:
    entries = []
    payload = bytearray()
    for it in dataset.items:
        raw = np.ascontiguousarray(it.frames, dtype="<f4").tobytes()
        entries.append(
            {
                "label": it.label,
                "valid_len": it.valid_len,
                "signal_positions": list(it.signal_positions),
                "split": it.split,
                "offset": len(payload),
                "length": len(raw),
            }
        )
        payload.extend(raw)
    header = json.dumps(
        {"spec": asdict(dataset.spec), "items": entries},
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        fh.write(bytes(payload))


def read_dataset(path) -> Dataset:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(DATASET_MAGIC)] != DATASET_MAGIC:
        raise ValueError(f"bad magic in dataset file '{path}'")
    pos = len(DATASET_MAGIC)
    if len(blob) < pos + 8:
        raise ValueError(f"truncated dataset '{path}': missing header length")
    (header_len,) = struct.unpack_from("<Q", blob, pos)
    pos += 8
    if len(blob) < pos + header_len:
        raise ValueError(
            f"truncated dataset '{path}': header expects {header_len} bytes, "
            f"{len(blob) - pos} available"
        )
    header = json.loads(blob[pos : pos + header_len].decode("utf-8"))
    payload = blob[pos + header_len :]

    spec = SynthSpec(**header["spec"])
    shape = (spec.T_max, spec.C, spec.H, spec.W)
    items = []
    for i, entry in enumerate(header["items"]):
        start, length = entry["offset"], entry["length"]
        if start + length > len(payload):
            raise ValueError(
                f"truncated dataset '{path}': item {i} expects {start + length} "
                f"payload bytes, {len(payload)} available"
            )
        frames = np.frombuffer(payload[start : start + length], dtype="<f4").reshape(shape)
        items.append(
            DataItem(
                item_id=i,
                frames=frames,
                label=entry["label"],
                valid_len=entry["valid_len"],
                signal_positions=tuple(entry["signal_positions"]),
                split=entry["split"],
            )
        )
    return Dataset(spec=spec, items=items)
