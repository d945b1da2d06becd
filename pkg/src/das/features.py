"""Per-frame descriptor extraction for the subsampling module.

Six non-learned channels per frame: intensity variance, four edge
magnitudes (Sobel x/y, 4- and 8-neighbor Laplacian, "valid" convolution,
absolute response averaged over channels and positions), and intensity
mean. Channels are standardized per batch over valid frames only, so an
all-zero padding frame maps to a well-defined (generally non-zero) row.
No gradient flows through this stage: descriptors are constants to the
optimizer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from numpy.lib.stride_tricks import sliding_window_view

FEATURE_CHANNELS = (
    "variance",
    "sobel_x",
    "sobel_y",
    "laplacian_4",
    "laplacian_8",
    "intensity_mean",
)

SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T.copy()
LAPLACIAN_4 = np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])
LAPLACIAN_8 = np.array([[1.0, 1.0, 1.0], [1.0, -8.0, 1.0], [1.0, 1.0, 1.0]])
EDGE_KERNELS = (SOBEL_X, SOBEL_Y, LAPLACIAN_4, LAPLACIAN_8)

STD_FLOOR = 1e-8


@dataclass
class FrameSequence:
    """Batch of frame stacks [B, T, C, H, W] with per-item valid lengths.

    Frames at or past an item's valid length are forced to zero
    ("empty frames"), matching the padding convention used throughout.
    """

    data: np.ndarray
    valid_len: np.ndarray

    def __post_init__(self):
        self.data = np.array(self.data, dtype=np.float64)
        if self.data.ndim != 5:
            raise ValueError(f"frame data must be [B,T,C,H,W], got shape {self.data.shape}")
        self.valid_len = np.asarray(self.valid_len, dtype=np.int64)
        b, t = self.data.shape[:2]
        if self.valid_len.shape != (b,):
            raise ValueError(f"valid_len must have shape ({b},), got {self.valid_len.shape}")
        if np.any(self.valid_len < 1) or np.any(self.valid_len > t):
            raise ValueError(f"valid lengths must lie in [1, {t}]")
        for i, n in enumerate(self.valid_len):
            self.data[i, n:] = 0.0

    @property
    def batch_size(self) -> int:
        return self.data.shape[0]

    @property
    def num_frames(self) -> int:
        return self.data.shape[1]

    def valid_mask(self) -> np.ndarray:
        """Boolean [B, T] mask of non-padding frames."""
        b, t = self.data.shape[:2]
        return np.arange(t)[None, :] < self.valid_len[:, None]


@dataclass
class FeatureStats:
    """Per-channel standardization statistics (mean/std over valid frames)."""

    mean: np.ndarray
    std: np.ndarray


@dataclass
class FeatureTensor:
    """Standardized per-frame descriptors [B, T, d] with channel labels."""

    data: np.ndarray
    channels: tuple = FEATURE_CHANNELS
    stats: FeatureStats | None = None


def frame_variance(seq: FrameSequence) -> np.ndarray:
    """Population variance of each frame over (C, H, W) -> [B, T]."""
    b, t = seq.data.shape[:2]
    return seq.data.reshape(b, t, -1).var(axis=-1)


def frame_mean(seq: FrameSequence) -> np.ndarray:
    """Mean intensity of each frame over (C, H, W) -> [B, T]."""
    b, t = seq.data.shape[:2]
    return seq.data.reshape(b, t, -1).mean(axis=-1)


def edge_features(seq: FrameSequence) -> np.ndarray:
    """Mean absolute edge response per fixed 3x3 kernel -> [B, T, 4].

    Valid convolution only (no padding), so H and W must be at least 3.
    Responses are averaged over channels and the (H-2) x (W-2) grid.
    """
    h, w = seq.data.shape[-2:]
    if h < 3 or w < 3:
        raise ValueError(f"edge features need H, W >= 3, got {h}x{w}")
    windows = sliding_window_view(seq.data, (3, 3), axis=(-2, -1))
    # true convolution: correlate against the flipped kernel
    kernels = np.stack([k[::-1, ::-1] for k in EDGE_KERNELS])
    responses = np.einsum("btcxyij,kij->btcxyk", windows, kernels)
    return np.abs(responses).mean(axis=(2, 3, 4))


def raw_feature_channels(seq: FrameSequence) -> np.ndarray:
    """Unstandardized descriptor stack [B, T, 6] in FEATURE_CHANNELS order."""
    variance = frame_variance(seq)
    edges = edge_features(seq)
    mean = frame_mean(seq)
    return np.concatenate(
        [variance[..., None], edges, mean[..., None]], axis=-1
    )


def compute_feature_stats(raw: np.ndarray, valid_mask: np.ndarray) -> FeatureStats:
    """Per-channel mean/std over valid frames only, std floored at 1e-8."""
    rows = raw[valid_mask]
    if rows.size == 0:
        raise ValueError("no valid frames to compute statistics over")
    mean = rows.mean(axis=0)
    std = np.maximum(rows.std(axis=0), STD_FLOOR)
    return FeatureStats(mean=mean, std=std)


def build_features(seq: FrameSequence, stats: FeatureStats | None = None) -> FeatureTensor:
    """Full descriptor pipeline: channels, then per-channel standardization.

    With `stats=None` the statistics come from this batch's valid frames
    (training behavior); passing running statistics gives deterministic
    single-pass inference. Padding rows are standardized with the same
    statistics, they are just excluded from computing them.
    """
    raw = raw_feature_channels(seq)
    if stats is None:
        stats = compute_feature_stats(raw, seq.valid_mask())
    data = (raw - stats.mean) / stats.std
    return FeatureTensor(data=data, channels=FEATURE_CHANNELS, stats=stats)


def standardize_features(raw: np.ndarray, stats: FeatureStats) -> FeatureTensor:
    """Standardize precomputed raw channels (for cached-feature training)."""
    return FeatureTensor(data=(raw - stats.mean) / stats.std, stats=stats)
