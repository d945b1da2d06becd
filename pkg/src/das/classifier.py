"""Downstream classification head over selected frames.

Each selected frame is average-pooled to a fixed 4x4 grid, flattened
with channels, and mapped through a tanh affine embedding. A learnable
additive-attention layer aggregates the k embeddings into one vector,
and a two-layer MLP produces class logits. Cross-entropy is computed
with log-sum-exp stabilization, so the loss is finite for any finite
logits.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import autodiff as ad
from .autodiff import Node
from .params import ParameterStore
from .rng import RandomStream

POOL_GRID = 4


@dataclass
class ClassifierConfig:
    num_classes: int
    channels: int = 1
    embed_dim: int = 32
    hidden: int = 32
    prefix: str = "clf"

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError("need at least two classes")
        if self.embed_dim < 1 or self.hidden < 1:
            raise ValueError("embed_dim and hidden must be >= 1")


def init_classifier_params(store: ParameterStore, cfg: ClassifierConfig, stream: RandomStream) -> None:
    p = cfg.prefix
    in_dim = cfg.channels * POOL_GRID * POOL_GRID
    e, m = cfg.embed_dim, cfg.hidden
    store.add(f"{p}.embed.w", stream.normal((in_dim, e), std=1.0 / np.sqrt(in_dim)))
    store.add(f"{p}.embed.b", np.zeros(e))
    store.add(f"{p}.agg.wa", stream.normal((e, e), std=1.0 / np.sqrt(e)))
    store.add(f"{p}.agg.v", stream.normal((e, 1), std=1.0 / np.sqrt(e)))
    store.add(f"{p}.mlp.w1", stream.normal((e, m), std=1.0 / np.sqrt(e)))
    store.add(f"{p}.mlp.b1", np.zeros(m))
    store.add(f"{p}.mlp.w2", stream.normal((m, cfg.num_classes), std=1.0 / np.sqrt(m)))
    store.add(f"{p}.mlp.b2", np.zeros(cfg.num_classes))


@lru_cache(maxsize=16)
def _pool_matrix(height: int, width: int) -> np.ndarray:
    """[grid^2, H*W] matrix averaging each adaptive 4x4 bin."""
    mat = np.zeros((POOL_GRID * POOL_GRID, height * width))
    for gy in range(POOL_GRID):
        y0, y1 = (gy * height) // POOL_GRID, ((gy + 1) * height) // POOL_GRID
        for gx in range(POOL_GRID):
            x0, x1 = (gx * width) // POOL_GRID, ((gx + 1) * width) // POOL_GRID
            cell = np.zeros((height, width))
            cell[y0:y1, x0:x1] = 1.0 / ((y1 - y0) * (x1 - x0))
            mat[gy * POOL_GRID + gx] = cell.reshape(-1)
    return mat


def frame_embed(frames: Node, store: ParameterStore, cfg: ClassifierConfig) -> Node:
    """Pool-flatten-affine embedding of selected frames -> [B, k, e]."""
    b, k, c, h, w = frames.value.shape
    if h < POOL_GRID or w < POOL_GRID:
        raise ValueError(f"frame embed needs H, W >= {POOL_GRID}, got {h}x{w}")
    pool = ad.constant(_pool_matrix(h, w).T)              # [H*W, 16]
    pooled = ad.matmul(ad.reshape(frames, (b, k, c, h * w)), pool)
    flat = ad.reshape(pooled, (b, k, c * POOL_GRID * POOL_GRID))
    affine = ad.add(ad.matmul(flat, store.node(f"{cfg.prefix}.embed.w")),
                    store.node(f"{cfg.prefix}.embed.b"))
    return ad.tanh(affine)


def attention_aggregate(embeddings: Node, store: ParameterStore, cfg: ClassifierConfig) -> Node:
    """Additive-attention weighted sum over the k frames -> [B, e]."""
    b, k, e = embeddings.value.shape
    keys = ad.tanh(ad.matmul(embeddings, store.node(f"{cfg.prefix}.agg.wa")))
    scores = ad.reshape(ad.matmul(keys, store.node(f"{cfg.prefix}.agg.v")), (b, k))
    weights = ad.reshape(ad.softmax(scores, axis=1), (b, k, 1))
    return ad.tensor_sum(ad.mul(weights, embeddings), axis=1)


def classify(aggregated: Node, store: ParameterStore, cfg: ClassifierConfig) -> Node:
    """Two-layer MLP class logits -> [B, num_classes]."""
    p = cfg.prefix
    h = ad.tanh(ad.add(ad.matmul(aggregated, store.node(f"{p}.mlp.w1")),
                       store.node(f"{p}.mlp.b1")))
    return ad.add(ad.matmul(h, store.node(f"{p}.mlp.w2")), store.node(f"{p}.mlp.b2"))


def cross_entropy(logits: Node, labels: np.ndarray) -> Node:
    """Mean cross-entropy with a detached-max log-sum-exp shift."""
    b, num_classes = logits.value.shape
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (b,):
        raise ValueError(f"labels must have shape ({b},), got {labels.shape}")
    if labels.min() < 0 or labels.max() >= num_classes:
        raise ValueError(
            f"labels must lie in [0, {num_classes}), got range "
            f"[{labels.min()}, {labels.max()}]"
        )
    shift = ad.constant(logits.value.max(axis=1, keepdims=True))
    lse = ad.add(ad.log(ad.tensor_sum(ad.exp(ad.sub(logits, shift)), axis=1, keepdims=True)), shift)
    one_hot = np.zeros((b, num_classes))
    one_hot[np.arange(b), labels] = 1.0
    picked = ad.tensor_sum(ad.mul(logits, ad.constant(one_hot)), axis=1, keepdims=True)
    return ad.tensor_mean(ad.sub(lse, picked))


def forward_logits(frames: Node, store: ParameterStore, cfg: ClassifierConfig) -> Node:
    """frames -> embeddings -> aggregate -> class logits."""
    return classify(attention_aggregate(frame_embed(frames, store, cfg), store, cfg), store, cfg)
