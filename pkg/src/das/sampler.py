"""Attention-guided differentiable frame selection.

A learnable per-frame score (affine projection of the descriptors) is
modulated by per-head scale vectors, averaged across heads into a
[B, k, T] logit matrix, perturbed with Gumbel noise, and pushed through
a temperature-scaled softmax. The forward pass uses the hard one-hot
selection; the backward pass follows the soft relaxation
(straight-through estimator). Temperature is itself input-adaptive,
bounded to [0.5, 1.5] times the base temperature.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Node, NumericFault
from .features import FeatureStats, FeatureTensor, FrameSequence, build_features
from .params import ParameterStore
from .rng import RandomStream


@dataclass
class SamplerConfig:
    """Hyperparameters of the selection module."""

    num_select: int          # rows of the sampling matrix (k)
    heads: int = 4
    tau0: float = 1.0
    hidden: int = 16
    feat_dim: int = 6
    prefix: str = "sampler"

    def __post_init__(self):
        if self.heads < 1:
            raise ValueError("heads must be >= 1")
        if self.num_select < 1:
            raise ValueError("num_select must be >= 1")
        if self.tau0 <= 0:
            raise ValueError("tau0 must be positive")


@dataclass
class SamplingMatrix:
    """Per-item selection weights over input frames.

    `soft` rows are probability distributions; `hard` rows are one-hot at
    the soft argmax (ties break toward the lowest index); `ste` equals
    `hard` in the forward direction while carrying `soft`'s gradient.
    """

    soft: Node            # [B, k, T]
    hard: np.ndarray      # [B, k, T]
    logits: Node          # [B, k, T]
    temperature: np.ndarray  # [B]
    ste: Node             # [B, k, T]

    @property
    def selected_indices(self) -> np.ndarray:
        """[B, k] chosen frame index per row."""
        return np.argmax(self.hard, axis=-1)


def init_sampler_params(store: ParameterStore, cfg: SamplerConfig, stream: RandomStream) -> None:
    """Register the projection, per-head MLPs, and temperature MLP."""
    d, hid, k = cfg.feat_dim, cfg.hidden, cfg.num_select
    p = cfg.prefix
    store.add(f"{p}.base.w", stream.normal((d, 1), std=1.0 / np.sqrt(d)))
    store.add(f"{p}.base.b", np.zeros(1))
    for h in range(cfg.heads):
        store.add(f"{p}.head{h}.w1", stream.normal((d, hid), std=1.0 / np.sqrt(d)))
        store.add(f"{p}.head{h}.b1", np.zeros(hid))
        store.add(f"{p}.head{h}.w2", stream.normal((hid, k), std=1.0 / np.sqrt(hid)))
        store.add(f"{p}.head{h}.b2", np.zeros(k))
    store.add(f"{p}.temp.w1", stream.normal((d, hid), std=1.0 / np.sqrt(d)))
    store.add(f"{p}.temp.b1", np.zeros(hid))
    store.add(f"{p}.temp.w2", stream.normal((hid, 1), std=1.0 / np.sqrt(hid)))
    store.add(f"{p}.temp.b2", np.zeros(1))


def _pooled(feats: FeatureTensor) -> np.ndarray:
    """Mean over the frame axis -> [B, d]; permutation-invariant reduction."""
    return feats.data.mean(axis=1)


def base_attention(feats: FeatureTensor, store: ParameterStore, cfg: SamplerConfig) -> Node:
    """Learnable affine per-frame score -> [B, T]."""
    b, t, _ = feats.data.shape
    f = ad.constant(feats.data)                       # [B, T, d]
    w = store.node(f"{cfg.prefix}.base.w")            # [d, 1]
    bias = store.node(f"{cfg.prefix}.base.b")         # [1]
    scores = ad.reshape(ad.matmul(f, w), (b, t))
    return ad.add(scores, bias)


def _mlp2(x: Node, store: ParameterStore, prefix: str) -> Node:
    """tanh-hidden two-layer MLP used by the heads and the temperature net."""
    h = ad.tanh(ad.add(ad.matmul(x, store.node(f"{prefix}.w1")), store.node(f"{prefix}.b1")))
    return ad.add(ad.matmul(h, store.node(f"{prefix}.w2")), store.node(f"{prefix}.b2"))


def head_scales(feats: FeatureTensor, store: ParameterStore, cfg: SamplerConfig, head: int) -> Node:
    """Strictly positive per-row scale factors for one head -> [B, k]."""
    if not 0 <= head < cfg.heads:
        raise ValueError(f"head index {head} outside [0, {cfg.heads})")
    pooled = ad.constant(_pooled(feats))              # [B, d]
    return ad.softplus(_mlp2(pooled, store, f"{cfg.prefix}.head{head}"))


def combine_heads(base_scores: Node, scales: list[Node]) -> Node:
    """Average of per-head modulated score matrices -> [B, k, T]."""
    if not scales:
        raise ValueError("need at least one head")
    b, t = base_scores.value.shape
    base3 = ad.reshape(base_scores, (b, 1, t))
    total = None
    for s in scales:
        k = s.value.shape[1]
        modulated = ad.mul(base3, ad.reshape(s, (b, k, 1)))
        total = modulated if total is None else ad.add(total, modulated)
    return ad.scale(total, 1.0 / len(scales))


def adaptive_temperature(feats: FeatureTensor, store: ParameterStore, cfg: SamplerConfig) -> Node:
    """Input-conditioned softmax temperature in [0.5*tau0, 1.5*tau0] -> [B]."""
    pooled = ad.constant(_pooled(feats))
    raw = _mlp2(pooled, store, f"{cfg.prefix}.temp")          # [B, 1]
    bounded = ad.add(ad.sigmoid(raw), ad.constant(np.array([[0.5]])))
    return ad.reshape(ad.scale(bounded, cfg.tau0), (feats.data.shape[0],))


def gumbel_softmax_sample(
    logits: Node,
    temperature: Node | np.ndarray,
    stream: RandomStream | None,
    mode: str = "train",
    deterministic: bool = False,
    noise: np.ndarray | None = None,
) -> SamplingMatrix:
    """Perturb logits with Gumbel noise and build the soft/hard/STE triple.

    Noise is drawn in both modes; eval mode with `deterministic` uses
    zero noise instead. `noise` injects fixed draws (tests). Argmax ties
    break toward the lowest frame index.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got '{mode}'")
    if not np.all(np.isfinite(logits.value)):
        raise NumericFault("non-finite sampling logits")
    b, k, t = logits.value.shape

    if noise is None:
        if mode == "eval" and deterministic:
            noise = np.zeros((b, k, t))
        else:
            if stream is None:
                raise ValueError("a random stream is required to draw noise")
            noise = stream.gumbel((b, k, t))

    tau_node = temperature if isinstance(temperature, Node) else ad.constant(temperature)
    tau3 = ad.reshape(tau_node, (b, 1, 1))
    perturbed = ad.div(ad.add(logits, ad.constant(noise)), tau3)
    soft = ad.softmax(perturbed, axis=-1)

    hard = np.zeros_like(soft.value)
    rows = np.argmax(soft.value, axis=-1)
    bi, ki = np.meshgrid(np.arange(b), np.arange(k), indexing="ij")
    hard[bi, ki, rows] = 1.0

    # straight-through: forward value is hard, gradient follows soft
    ste = ad.add(ad.detach(ad.sub(ad.constant(hard), soft)), soft)
    return SamplingMatrix(
        soft=soft,
        hard=hard,
        logits=logits,
        temperature=np.asarray(tau_node.value, dtype=np.float64).reshape(b).copy(),
        ste=ste,
    )


def apply_sampling(matrix: SamplingMatrix, seq: FrameSequence, use_soft: bool = False) -> Node:
    """Weighted combination of input frames -> [B, k, C, H, W].

    Uses the straight-through matrix (hard forward, soft backward);
    `use_soft` switches to the pure soft path, which is what
    finite-difference checks differentiate through.
    """
    b, t, c, h, w = seq.data.shape
    mb, k, mt = matrix.ste.value.shape
    if (mb, mt) != (b, t):
        raise ValueError(
            f"sampling matrix [{mb}, {k}, {mt}] does not match sequence "
            f"batch/frames [{b}, ..., {t}]"
        )
    weights = matrix.soft if use_soft else matrix.ste
    frames = ad.constant(seq.data.reshape(b, t, c * h * w))
    mixed = ad.matmul(weights, frames)
    return ad.reshape(mixed, (b, k, c, h, w))


def sample(
    seq: FrameSequence,
    store: ParameterStore,
    cfg: SamplerConfig,
    stream: RandomStream | None,
    mode: str = "train",
    deterministic: bool = False,
    stats: FeatureStats | None = None,
    feats: FeatureTensor | None = None,
) -> tuple[Node, SamplingMatrix]:
    """Full selection pipeline: descriptors to selected frames.

    `feats` short-circuits descriptor extraction when the caller already
    standardized cached channels (the training loop does this).
    """
    if feats is None:
        feats = build_features(seq, stats=stats)
    base = base_attention(feats, store, cfg)
    scales = [head_scales(feats, store, cfg, h) for h in range(cfg.heads)]
    logits = combine_heads(base, scales)
    tau = adaptive_temperature(feats, store, cfg)
    matrix = gumbel_softmax_sample(logits, tau, stream, mode=mode, deterministic=deterministic)
    frames = apply_sampling(matrix, seq)
    return frames, matrix


def dump_sampling_records(path, item_ids, matrices: SamplingMatrix) -> None:
    """Append one JSON line per batch item: id, temperature, selected
    indices, and soft rows rounded to 6 decimals."""
    soft = matrices.soft.value
    indices = matrices.selected_indices
    with open(path, "a", encoding="utf-8") as fh:
        for i, item_id in enumerate(item_ids):
            record = {
                "item-id": int(item_id),
                "temperature": round(float(matrices.temperature[i]), 6),
                "selected-indices": [int(x) for x in indices[i]],
                "soft-rows": [[round(float(v), 6) for v in row] for row in soft[i]],
            }
            fh.write(json.dumps(record) + "\n")
