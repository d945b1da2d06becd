"""Comparison selection strategies sharing the SamplingMatrix interface.

full: identity pass-through (k = T). random: k distinct frames per item.
uniform: fixed equidistant frames. dps: learnable logits shared across
all inputs (task-adaptive but content-agnostic), pushed through the same
Gumbel-Softmax machinery as the attention-guided sampler. das: the
input-adaptive module from `sampler`.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .features import FeatureStats, FrameSequence
from .params import ParameterStore
from .rng import RandomStream
from .sampler import (
    SamplerConfig,
    SamplingMatrix,
    apply_sampling,
    gumbel_softmax_sample,
    init_sampler_params,
    sample,
)

STRATEGY_KINDS = ("full", "random", "uniform", "dps", "das")


def uniform_indices(num_frames: int, k: int) -> np.ndarray:
    """Equidistant frame indices: floor((j + 0.5) * T / k)."""
    if not 1 <= k <= num_frames:
        raise ValueError(f"need 1 <= k <= T, got k={k}, T={num_frames}")
    j = np.arange(k)
    return np.floor((j + 0.5) * num_frames / k).astype(np.int64)


def random_indices(num_frames: int, k: int, stream: RandomStream) -> np.ndarray:
    """k distinct frame indices, sorted ascending, deterministic per stream."""
    if not 1 <= k <= num_frames:
        raise ValueError(f"need 1 <= k <= T, got k={k}, T={num_frames}")
    return stream.choose(num_frames, k)


def one_hot_matrix(indices: np.ndarray, num_frames: int, tau0: float = 1.0) -> SamplingMatrix:
    """Constant SamplingMatrix selecting `indices` ([B, k]) exactly.

    Soft equals hard (one-hot rows are valid distributions); no gradient
    passes through any field.
    """
    indices = np.asarray(indices, dtype=np.int64)
    b, k = indices.shape
    hard = np.zeros((b, k, num_frames))
    bi, ki = np.meshgrid(np.arange(b), np.arange(k), indexing="ij")
    hard[bi, ki, indices] = 1.0
    const = ad.constant(hard)
    return SamplingMatrix(
        soft=const,
        hard=hard,
        logits=const,
        temperature=np.full(b, tau0),
        ste=const,
    )


class Strategy:
    """Common interface: init parameters (if any) and sample a batch."""

    kind: str
    trainable = False

    def __init__(self, num_frames: int, k: int, tau0: float = 1.0):
        self.num_frames = num_frames
        self.k = k
        self.tau0 = tau0

    def init_params(self, store: ParameterStore, stream: RandomStream) -> None:
        pass

    def select(self, seq, store, stream, mode, deterministic, stats, feats):
        raise NotImplementedError

    def sample(
        self,
        seq: FrameSequence,
        store: ParameterStore,
        stream: RandomStream | None,
        mode: str = "train",
        deterministic: bool = False,
        stats: FeatureStats | None = None,
        feats=None,
    ):
        return self.select(seq, store, stream, mode, deterministic, stats, feats)


class FullStrategy(Strategy):
    kind = "full"

    def __init__(self, num_frames: int, tau0: float = 1.0):
        super().__init__(num_frames, num_frames, tau0)

    def select(self, seq, store, stream, mode, deterministic, stats, feats):
        idx = np.tile(np.arange(self.num_frames), (seq.batch_size, 1))
        matrix = one_hot_matrix(idx, self.num_frames, self.tau0)
        return apply_sampling(matrix, seq), matrix


class RandomStrategy(Strategy):
    kind = "random"

    def select(self, seq, store, stream, mode, deterministic, stats, feats):
        if stream is None:
            raise ValueError("random strategy needs a stream")
        idx = np.stack(
            [random_indices(self.num_frames, self.k, stream) for _ in range(seq.batch_size)]
        )
        matrix = one_hot_matrix(idx, self.num_frames, self.tau0)
        return apply_sampling(matrix, seq), matrix


class UniformStrategy(Strategy):
    kind = "uniform"

    def select(self, seq, store, stream, mode, deterministic, stats, feats):
        idx = np.tile(uniform_indices(self.num_frames, self.k), (seq.batch_size, 1))
        matrix = one_hot_matrix(idx, self.num_frames, self.tau0)
        return apply_sampling(matrix, seq), matrix


class DpsStrategy(Strategy):
    """Fixed learned logits, content-agnostic, constant base temperature."""

    kind = "dps"
    trainable = True
    param_name = "dps.theta"

    def init_params(self, store, stream):
        store.add(self.param_name, stream.normal((self.k, self.num_frames), std=0.01))

    def select(self, seq, store, stream, mode, deterministic, stats, feats):
        b = seq.batch_size
        theta = store.node(self.param_name)
        logits = ad.broadcast_to(
            ad.reshape(theta, (1, self.k, self.num_frames)), (b, self.k, self.num_frames)
        )
        tau = np.full(b, self.tau0)
        matrix = gumbel_softmax_sample(
            logits, tau, stream, mode=mode, deterministic=deterministic
        )
        return apply_sampling(matrix, seq), matrix


class DasStrategy(Strategy):
    """Input- and task-adaptive attention-guided sampler."""

    kind = "das"
    trainable = True

    def __init__(self, num_frames: int, k: int, tau0: float = 1.0, heads: int = 4, hidden: int = 16):
        super().__init__(num_frames, k, tau0)
        self.cfg = SamplerConfig(
            num_select=k, heads=heads, tau0=tau0, hidden=hidden
        )

    def init_params(self, store, stream):
        init_sampler_params(store, self.cfg, stream)

    def select(self, seq, store, stream, mode, deterministic, stats, feats):
        return sample(
            seq, store, self.cfg, stream,
            mode=mode, deterministic=deterministic, stats=stats, feats=feats,
        )


def make_strategy(
    kind: str,
    num_frames: int,
    k: int,
    tau0: float = 1.0,
    heads: int = 4,
    hidden: int = 16,
) -> Strategy:
    if kind == "full":
        return FullStrategy(num_frames, tau0)
    if kind == "random":
        return RandomStrategy(num_frames, k, tau0)
    if kind == "uniform":
        return UniformStrategy(num_frames, k, tau0)
    if kind == "dps":
        return DpsStrategy(num_frames, k, tau0)
    if kind == "das":
        return DasStrategy(num_frames, k, tau0, heads=heads, hidden=hidden)
    raise ValueError(f"unknown strategy '{kind}', expected one of {STRATEGY_KINDS}")
