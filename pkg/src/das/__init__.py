"""Attention-guided differentiable subsampling for sequence classification.

The package trains a module that learns which frames of a padded
sequence are worth keeping: lightweight per-frame descriptors feed a
multi-head attention scorer whose logits drive Gumbel-Softmax selection
with a straight-through estimator, so the discrete choice trains end to
end. Baseline strategies, a toy downstream classifier, synthetic
benchmark data, and a comparison harness round out the pipeline.
"""

from .autodiff import Node, NumericFault, backward, constant
from .baselines import STRATEGY_KINDS, make_strategy, random_indices, uniform_indices
from .classifier import ClassifierConfig, attention_aggregate, classify, cross_entropy, frame_embed
from .data import Dataset, SynthSpec, generate, read_dataset, write_dataset
from .features import (
    FEATURE_CHANNELS,
    FeatureStats,
    FeatureTensor,
    FrameSequence,
    build_features,
    edge_features,
    frame_variance,
)
from .gradcheck import grad_check, run_gradient_suite
from .metrics import MetricsRecord, balanced_accuracy, macro_auc
from .params import ParameterStore, adam_step, load_checkpoint, save_checkpoint
from .rng import RandomStream
from .sampler import (
    SamplerConfig,
    SamplingMatrix,
    adaptive_temperature,
    apply_sampling,
    base_attention,
    combine_heads,
    gumbel_softmax_sample,
    head_scales,
    init_sampler_params,
    sample,
)
from .train import EarlyStopper, RunConfig, Trainer, compare, evaluate_checkpoint, load_config, train

__version__ = "0.1.0"

__all__ = [
    "Node", "NumericFault", "backward", "constant",
    "STRATEGY_KINDS", "make_strategy", "random_indices", "uniform_indices",
    "ClassifierConfig", "attention_aggregate", "classify", "cross_entropy", "frame_embed",
    "Dataset", "SynthSpec", "generate", "read_dataset", "write_dataset",
    "FEATURE_CHANNELS", "FeatureStats", "FeatureTensor", "FrameSequence",
    "build_features", "edge_features", "frame_variance",
    "grad_check", "run_gradient_suite",
    "MetricsRecord", "balanced_accuracy", "macro_auc",
    "ParameterStore", "adam_step", "load_checkpoint", "save_checkpoint",
    "RandomStream",
    "SamplerConfig", "SamplingMatrix", "adaptive_temperature", "apply_sampling",
    "base_attention", "combine_heads", "gumbel_softmax_sample", "head_scales",
    "init_sampler_params", "sample",
    "EarlyStopper", "RunConfig", "Trainer", "compare", "evaluate_checkpoint",
    "load_config", "train",
]
