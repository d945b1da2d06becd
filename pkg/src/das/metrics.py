"""Evaluation metrics and CSV emission.

Balanced accuracy is the unweighted mean of per-class recall over the
classes present in the truth. The AUC is the one-vs-rest rank-based
(Mann-Whitney) area, ties counted half, macro-averaged over classes
that have both a positive and a negative example.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def balanced_accuracy(preds: np.ndarray, truth: np.ndarray, num_classes: int) -> float:
    preds = np.asarray(preds, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    recalls = []
    for c in range(num_classes):
        mask = truth == c
        if not mask.any():
            continue
        recalls.append(float(np.mean(preds[mask] == c)))
    if not recalls:
        raise ValueError("no class present in the truth labels")
    return float(np.mean(recalls))


def _tie_ranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned the group average."""
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores))
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def binary_auc(scores: np.ndarray, positive: np.ndarray) -> float:
    """Rank-based AUC of `scores` against boolean `positive` labels."""
    n_pos = int(positive.sum())
    n_neg = len(positive) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs at least one positive and one negative")
    ranks = _tie_ranks(np.asarray(scores, dtype=np.float64))
    rank_sum = ranks[positive].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def macro_auc(scores: np.ndarray, truth: np.ndarray) -> float:
    """One-vs-rest AUC averaged over classes with both labels present."""
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.int64)
    if scores.ndim != 2 or scores.shape[0] != truth.shape[0]:
        raise ValueError(
            f"scores must be [N, num_classes] aligned with truth, got "
            f"{scores.shape} vs {truth.shape}"
        )
    aucs = []
    for c in range(scores.shape[1]):
        positive = truth == c
        if positive.all() or not positive.any():
            continue
        aucs.append(binary_auc(scores[:, c], positive))
    if not aucs:
        raise ValueError("no class has both positive and negative examples")
    return float(np.mean(aucs))


@dataclass
class MetricsRecord:
    strategy: str
    seed: int
    split: str
    epoch: int
    loss: float
    balanced_accuracy: float
    macro_auc: float
    signal_hit_rate: float
    wall_time_ms: float


METRICS_COLUMNS = (
    "strategy,seed,split,epoch,loss,balanced_accuracy,macro_auc,signal_hit_rate,wall_time_ms"
)


def format_metric(x: float) -> str:
    return f"{x:.10g}"


def write_metrics_csv(records: list[MetricsRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(METRICS_COLUMNS + "\n")
        for r in records:
            fh.write(
                f"{r.strategy},{r.seed},{r.split},{r.epoch},"
                f"{format_metric(r.loss)},{format_metric(r.balanced_accuracy)},"
                f"{format_metric(r.macro_auc)},{format_metric(r.signal_hit_rate)},"
                f"{format_metric(r.wall_time_ms)}\n"
            )


COMPARISON_COLUMNS = "strategy,metric,mean,std,is_best"


def write_comparison_csv(rows: list[dict], path, header_notes: list[str]) -> None:
    """Comparison table; `header_notes` become leading '#' comment lines."""
    with open(path, "w", encoding="utf-8") as fh:
        for note in header_notes:
            fh.write(f"# {note}\n")
        fh.write(COMPARISON_COLUMNS + "\n")
        for row in rows:
            mean = row["mean"] if isinstance(row["mean"], str) else format_metric(row["mean"])
            std = row["std"] if isinstance(row["std"], str) else format_metric(row["std"])
            fh.write(f"{row['strategy']},{row['metric']},{mean},{std},{str(row['is_best']).lower()}\n")
