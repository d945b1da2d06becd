"""Training loop, early stopping, and the multi-strategy comparison harness.

Joint mini-batch training of the selection strategy (when learnable) and
the classifier with Adam, early stopping on validation loss, restore of
the best checkpoint, and per-epoch metric records. `compare` trains all
strategies on identical data splits and seeds and emits an aggregated
CSV; its output is byte-identical across invocations of the same config.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .autodiff import backward
from .baselines import STRATEGY_KINDS, make_strategy
from .classifier import ClassifierConfig, cross_entropy, forward_logits, init_classifier_params
from .data import Dataset, read_dataset
from .features import FeatureStats, compute_feature_stats, raw_feature_channels, standardize_features
from .metrics import (
    MetricsRecord,
    balanced_accuracy,
    macro_auc,
    write_comparison_csv,
    write_metrics_csv,
)
from .params import ParameterStore, adam_step, save_checkpoint
from .rng import RandomStream

RUNNING_STATS_MOMENTUM = 0.1


@dataclass
class RunConfig:
    """Everything needed to reproduce a run bit-for-bit."""

    strategy: str = "das"
    sample_ratio: float = 0.5
    lr: float = 1e-4
    batch_size: int = 16
    max_epochs: int = 200
    patience: int = 10
    tau0: float = 1.0
    heads: int = 4
    sampler_hidden: int = 16
    embed_dim: int = 32
    classifier_hidden: int = 32
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2])
    dataset: str = ""
    out_dir: str = "runs"
    deterministic_eval: bool = False

    def __post_init__(self):
        if self.strategy not in STRATEGY_KINDS:
            raise ValueError(f"unknown strategy '{self.strategy}'")
        if not 0.0 < self.sample_ratio <= 1.0:
            raise ValueError("sample_ratio must be in (0, 1]")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ValueError("batch_size, max_epochs and patience must be >= 1")

    def num_select(self, t_max: int) -> int:
        if self.strategy == "full":
            return t_max
        return max(1, round(self.sample_ratio * t_max))


def load_config(path) -> RunConfig:
    """Strict JSON config: unknown keys are an error, not a warning."""
    import json

    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    allowed = set(RunConfig.__dataclass_fields__)
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise ValueError(f"unknown config key '{unknown[0]}'")
    return RunConfig(**raw)


class EarlyStopper:
    """Stop after `patience` consecutive epochs without improvement."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best_loss = np.inf
        self.best_epoch = 0
        self.strikes = 0

    def update(self, epoch: int, loss: float) -> bool:
        """Record an epoch's validation loss; True means stop now."""
        if loss < self.best_loss:
            self.best_loss = loss
            self.best_epoch = epoch
            self.strikes = 0
        else:
            self.strikes += 1
        return self.strikes >= self.patience


@dataclass
class EvalResult:
    loss: float
    balanced_accuracy: float
    macro_auc: float
    signal_hit_rate: float


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    e = np.exp(logits - logits.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def _hit_fraction(selected: np.ndarray, positions: list) -> np.ndarray:
    """Per-item fraction of selected indices that land on signal frames."""
    out = np.zeros(len(positions))
    for i, pos in enumerate(positions):
        pos_set = set(pos)
        out[i] = sum(1 for j in selected[i] if int(j) in pos_set) / selected.shape[1]
    return out


class Trainer:
    """One (strategy, seed) training run over a shared dataset."""

    def __init__(self, dataset: Dataset, config: RunConfig, seed: int):
        self.dataset = dataset
        self.config = config
        self.seed = seed
        spec = dataset.spec
        self.k = config.num_select(spec.T_max)
        self.root = RandomStream(seed).derive(f"run.{config.strategy}")
        self.strategy = make_strategy(
            config.strategy, spec.T_max, self.k,
            tau0=config.tau0, heads=config.heads, hidden=config.sampler_hidden,
        )
        self.clf_cfg = ClassifierConfig(
            num_classes=spec.num_classes,
            channels=spec.C,
            embed_dim=config.embed_dim,
            hidden=config.classifier_hidden,
        )
        self.store = ParameterStore()
        self.strategy.init_params(self.store, self.root.derive("init.strategy"))
        init_classifier_params(self.store, self.clf_cfg, self.root.derive("init.classifier"))
        self.store.add("featstats.mean", np.zeros(6))
        self.store.add("featstats.std", np.ones(6))

        self.train_ids = dataset.split_indices("train")
        self.val_ids = dataset.split_indices("val")
        self.test_ids = dataset.split_indices("test")
        self.raw_feats = self._cache_raw_features()

    def _cache_raw_features(self) -> np.ndarray:
        """Descriptor channels per item, computed once (they carry no grad)."""
        chunks = []
        ids = list(range(len(self.dataset.items)))
        for start in range(0, len(ids), 64):
            seq, _, _ = self.dataset.batch(ids[start : start + 64])
            chunks.append(raw_feature_channels(seq))
        return np.concatenate(chunks, axis=0)

    def _running_stats(self) -> FeatureStats:
        return FeatureStats(
            mean=self.store.value("featstats.mean").copy(),
            std=self.store.value("featstats.std").copy(),
        )

    def _forward(self, ids, stream, mode, deterministic, stats=None):
        seq, labels, positions = self.dataset.batch(ids)
        raw = self.raw_feats[list(ids)]
        if stats is None:
            stats = compute_feature_stats(raw, seq.valid_mask())
        feats = standardize_features(raw, stats)
        frames, matrix = self.strategy.sample(
            seq, self.store, stream,
            mode=mode, deterministic=deterministic, stats=stats, feats=feats,
        )
        logits = forward_logits(frames, self.store, self.clf_cfg)
        loss = cross_entropy(logits, labels)
        return loss, logits, matrix, labels, positions, stats

    def _update_running_stats(self, batch_stats: FeatureStats) -> None:
        m = RUNNING_STATS_MOMENTUM
        mean = self.store.value("featstats.mean")
        std = self.store.value("featstats.std")
        mean[...] = (1.0 - m) * mean + m * batch_stats.mean
        std[...] = (1.0 - m) * std + m * batch_stats.std

    def _train_epoch(self, epoch: int):
        stream = self.root.derive(f"train.epoch-{epoch}")
        perm = stream.derive("shuffle").permutation(len(self.train_ids))
        order = [self.train_ids[i] for i in perm]
        bs = self.config.batch_size
        total_loss, total_items = 0.0, 0
        preds, labels_all, probs_all, hits = [], [], [], []
        for start in range(0, len(order), bs):
            ids = order[start : start + bs]
            loss, logits, matrix, labels, positions, batch_stats = self._forward(
                ids, stream, mode="train", deterministic=False
            )
            self._update_running_stats(batch_stats)
            backward(loss)
            adam_step(self.store, self.config.lr)
            total_loss += float(loss.value) * len(ids)
            total_items += len(ids)
            probs = _softmax_rows(logits.value)
            preds.append(np.argmax(probs, axis=1))
            probs_all.append(probs)
            labels_all.append(labels)
            hits.append(_hit_fraction(matrix.selected_indices, positions))
        preds = np.concatenate(preds)
        labels_all = np.concatenate(labels_all)
        return EvalResult(
            loss=total_loss / total_items,
            balanced_accuracy=balanced_accuracy(preds, labels_all, self.dataset.spec.num_classes),
            macro_auc=macro_auc(np.concatenate(probs_all), labels_all),
            signal_hit_rate=float(np.mean(np.concatenate(hits))),
        )

    def evaluate(self, split: str, epoch: int, deterministic: bool | None = None) -> EvalResult:
        if deterministic is None:
            deterministic = self.config.deterministic_eval
        ids = {"train": self.train_ids, "val": self.val_ids, "test": self.test_ids}[split]
        stream = self.root.derive(f"eval.{split}.epoch-{epoch}")
        stats = self._running_stats()
        bs = self.config.batch_size
        total_loss, total_items = 0.0, 0
        preds, labels_all, probs_all, hits = [], [], [], []
        for start in range(0, len(ids), bs):
            chunk = ids[start : start + bs]
            loss, logits, matrix, labels, positions, _ = self._forward(
                chunk, stream, mode="eval", deterministic=deterministic, stats=stats
            )
            total_loss += float(loss.value) * len(chunk)
            total_items += len(chunk)
            probs = _softmax_rows(logits.value)
            preds.append(np.argmax(probs, axis=1))
            probs_all.append(probs)
            labels_all.append(labels)
            hits.append(_hit_fraction(matrix.selected_indices, positions))
        preds = np.concatenate(preds)
        labels_all = np.concatenate(labels_all)
        return EvalResult(
            loss=total_loss / total_items,
            balanced_accuracy=balanced_accuracy(preds, labels_all, self.dataset.spec.num_classes),
            macro_auc=macro_auc(np.concatenate(probs_all), labels_all),
            signal_hit_rate=float(np.mean(np.concatenate(hits))),
        )

    def run(self) -> tuple[list[MetricsRecord], EvalResult, int]:
        """Train with early stopping; returns (records, test result, best epoch)."""
        cfg = self.config
        stopper = EarlyStopper(cfg.patience)
        best_values = self.store.copy_values()
        records: list[MetricsRecord] = []

        for epoch in range(1, cfg.max_epochs + 1):
            t0 = time.perf_counter()
            train_res = self._train_epoch(epoch)
            train_ms = 1000.0 * (time.perf_counter() - t0)
            t1 = time.perf_counter()
            val_res = self.evaluate("val", epoch)
            val_ms = 1000.0 * (time.perf_counter() - t1)
            records.append(self._record("train", epoch, train_res, train_ms))
            records.append(self._record("val", epoch, val_res, val_ms))
            improved = val_res.loss < stopper.best_loss
            stop = stopper.update(epoch, val_res.loss)
            if improved:
                best_values = self.store.copy_values()
            if stop:
                break

        self.store.load_values(best_values)
        best_epoch = stopper.best_epoch
        t2 = time.perf_counter()
        test_res = self.evaluate("test", best_epoch)
        test_ms = 1000.0 * (time.perf_counter() - t2)
        records.append(self._record("test", best_epoch, test_res, test_ms))
        return records, test_res, best_epoch

    def _record(self, split, epoch, res: EvalResult, wall_ms) -> MetricsRecord:
        return MetricsRecord(
            strategy=self.config.strategy,
            seed=self.seed,
            split=split,
            epoch=epoch,
            loss=res.loss,
            balanced_accuracy=res.balanced_accuracy,
            macro_auc=res.macro_auc,
            signal_hit_rate=res.signal_hit_rate,
            wall_time_ms=wall_ms,
        )

    def checkpoint_meta(self, best_epoch: int) -> dict:
        return {
            "strategy": self.config.strategy,
            "seed": self.seed,
            "k": self.k,
            "tau0": self.config.tau0,
            "heads": self.config.heads,
            "sampler_hidden": self.config.sampler_hidden,
            "embed_dim": self.config.embed_dim,
            "classifier_hidden": self.config.classifier_hidden,
            "num_classes": self.dataset.spec.num_classes,
            "channels": self.dataset.spec.C,
            "t_max": self.dataset.spec.T_max,
            "best_epoch": best_epoch,
            "batch_size": self.config.batch_size,
            "deterministic_eval": self.config.deterministic_eval,
        }


@dataclass
class TrainResult:
    seed: int
    checkpoint_path: str
    test: EvalResult
    best_epoch: int


def train(config: RunConfig, dataset: Dataset | None = None, write_outputs: bool = True) -> list[TrainResult]:
    """Train one strategy across config.seeds; writes metrics and checkpoints."""
    import os

    if dataset is None:
        dataset = read_dataset(config.dataset)
    if write_outputs:
        os.makedirs(config.out_dir, exist_ok=True)
    all_records: list[MetricsRecord] = []
    results = []
    for seed in config.seeds:
        trainer = Trainer(dataset, config, seed)
        records, test_res, best_epoch = trainer.run()
        all_records.extend(records)
        ckpt_path = ""
        if write_outputs:
            ckpt_path = os.path.join(config.out_dir, f"{config.strategy}_seed{seed}.ckpt")
            save_checkpoint(trainer.store, ckpt_path, meta=trainer.checkpoint_meta(best_epoch))
        results.append(TrainResult(seed, ckpt_path, test_res, best_epoch))
    if write_outputs:
        write_metrics_csv(all_records, os.path.join(config.out_dir, "metrics.csv"))
    return results


COMPARISON_METRICS = ("balanced_accuracy", "macro_auc", "signal_hit_rate")
SUBSAMPLING_STRATEGIES = ("random", "uniform", "dps", "das")
COMPARISON_ROW_ORDER = ("full", "random", "uniform", "dps", "adps", "das")


def compare(config: RunConfig, dataset: Dataset | None = None, write_outputs: bool = True):
    """Train every strategy on identical data/seeds; aggregate test metrics.

    Returns (rows, per-strategy test results). The CSV marks the best
    subsampling strategy (full-sequence is the reference, not a
    competitor; the sequential-conditioning baseline is listed but not
    implemented).
    """
    import os

    if dataset is None:
        dataset = read_dataset(config.dataset)
    per_strategy: dict[str, list[EvalResult]] = {}
    for kind in STRATEGY_KINDS:
        sub = replace(config, strategy=kind)
        results = train(sub, dataset=dataset, write_outputs=False)
        per_strategy[kind] = [r.test for r in results]

    means: dict[tuple[str, str], float] = {}
    stds: dict[tuple[str, str], float] = {}
    for kind, tests in per_strategy.items():
        for metric in COMPARISON_METRICS:
            vals = np.array([getattr(t, metric) for t in tests])
            means[(kind, metric)] = float(vals.mean())
            stds[(kind, metric)] = float(vals.std())

    best: dict[str, str] = {}
    for metric in COMPARISON_METRICS:
        best[metric] = max(SUBSAMPLING_STRATEGIES, key=lambda s: means[(s, metric)])

    rows = []
    for kind in COMPARISON_ROW_ORDER:
        for metric in COMPARISON_METRICS:
            if kind == "adps":
                rows.append(
                    {"strategy": kind, "metric": metric,
                     "mean": "not_implemented", "std": "not_implemented", "is_best": False}
                )
            else:
                rows.append(
                    {
                        "strategy": kind,
                        "metric": metric,
                        "mean": means[(kind, metric)],
                        "std": stds[(kind, metric)],
                        "is_best": best[metric] == kind,
                    }
                )

    if write_outputs:
        os.makedirs(config.out_dir, exist_ok=True)
        notes = [
            f"dataset_spec {_spec_note(dataset)}",
            f"k={config.num_select(dataset.spec.T_max)} sample_ratio={config.sample_ratio} "
            f"seeds={','.join(str(s) for s in config.seeds)} lr={config.lr} "
            f"batch_size={config.batch_size} max_epochs={config.max_epochs} "
            f"patience={config.patience}",
        ]
        write_comparison_csv(rows, os.path.join(config.out_dir, "comparison.csv"), notes)
    return rows, per_strategy


def _spec_note(dataset: Dataset) -> str:
    spec = asdict(dataset.spec)
    return " ".join(f"{k}={v}" for k, v in sorted(spec.items()))


def _trainer_from_checkpoint(ckpt_path, dataset: Dataset) -> tuple[Trainer, dict]:
    """Rebuild the model described by a checkpoint's meta and load its values."""
    from .params import load_checkpoint

    store, meta = load_checkpoint(ckpt_path)
    config = RunConfig(
        strategy=meta["strategy"],
        sample_ratio=meta["k"] / meta["t_max"],
        tau0=meta["tau0"],
        heads=meta["heads"],
        sampler_hidden=meta["sampler_hidden"],
        embed_dim=meta["embed_dim"],
        classifier_hidden=meta["classifier_hidden"],
        batch_size=meta["batch_size"],
        seeds=[meta["seed"]],
        deterministic_eval=meta.get("deterministic_eval", False),
    )
    trainer = Trainer(dataset, config, meta["seed"])
    expected = set(trainer.store.names())
    loaded = set(store.names())
    if expected != loaded:
        missing = sorted(expected - loaded)
        extra = sorted(loaded - expected)
        raise ValueError(
            f"checkpoint does not match the model: missing {missing}, unexpected {extra}"
        )
    trainer.store.load_values(store.copy_values())
    return trainer, meta


def evaluate_checkpoint(
    ckpt_path, data_path, split: str = "test", deterministic: bool = False
) -> EvalResult:
    """Metrics of a saved model on one split of a dataset file."""
    dataset = read_dataset(data_path)
    trainer, meta = _trainer_from_checkpoint(ckpt_path, dataset)
    return trainer.evaluate(split, epoch=meta["best_epoch"], deterministic=deterministic)


def inspect_checkpoint(ckpt_path, data_path, out_path, deterministic: bool = False) -> int:
    """Dump one sampling-matrix record per dataset item; returns the count."""
    from .sampler import dump_sampling_records

    dataset = read_dataset(data_path)
    trainer, meta = _trainer_from_checkpoint(ckpt_path, dataset)
    stats = trainer._running_stats()
    stream = trainer.root.derive("inspect")
    open(out_path, "w").close()
    ids = list(range(len(dataset.items)))
    bs = trainer.config.batch_size
    for start in range(0, len(ids), bs):
        chunk = ids[start : start + bs]
        seq, _, _ = dataset.batch(chunk)
        raw = trainer.raw_feats[chunk]
        feats = standardize_features(raw, stats)
        _, matrix = trainer.strategy.sample(
            seq, trainer.store, stream,
            mode="eval", deterministic=deterministic, stats=stats, feats=feats,
        )
        dump_sampling_records(out_path, chunk, matrix)
    return len(ids)
