"""
Classification metrics and the multi-label loss.
"""
from __future__ import annotations

import torch
import torch.nn.functional as F

from geodistill.exceptions import InvalidArgument, UndefinedMetricError

TOP5_MIN_CLASSES = 5


def topk_accuracy(scores: torch.Tensor, labels: torch.Tensor, k: int = 1) -> float:
    if scores.shape[0] != labels.shape[0]:
        raise InvalidArgument(f"{scores.shape[0]} score rows but {labels.shape[0]} labels")
    if scores.shape[0] == 0:
        raise UndefinedMetricError("accuracy of an empty set is undefined")
    top = torch.sort(scores, dim=1, descending=True, stable=True).indices[:, :k]
    return (top == labels[:, None]).any(dim=1).double().mean().item()


def classification_metrics(scores: torch.Tensor, labels: torch.Tensor) -> dict[str, float]:
    """top1, plus top5 when there are at least five classes."""
    metrics = {'top1': topk_accuracy(scores, labels, 1)}
    if scores.shape[1] >= TOP5_MIN_CLASSES:
        metrics['top5'] = topk_accuracy(scores, labels, 5)
    return metrics


def check_binary(targets: torch.Tensor) -> None:
    if not bool(((targets == 0) | (targets == 1)).all()):
        raise InvalidArgument("multi-label targets must be 0 or 1")


def multilabel_loss(logits: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """Mean over samples and classes of the logistic loss."""
    if logits.shape != targets.shape:
        raise InvalidArgument(f"logits {tuple(logits.shape)} and targets {tuple(targets.shape)} differ in shape")
    check_binary(targets)
    return F.multilabel_soft_margin_loss(logits, targets.to(logits.dtype))


def average_precision(scores: torch.Tensor, targets: torch.Tensor) -> float:
    """
    Mean of precision@rank over the ranks of positives.

    Scores are ranked descending; equal scores keep their input order.
    """
    order = torch.sort(scores.double(), descending=True, stable=True).indices
    hits = targets[order].double()
    positives = hits.sum()
    if positives == 0:
        raise UndefinedMetricError("average precision needs at least one positive")
    precision = hits.cumsum(0) / torch.arange(1, len(hits) + 1, dtype=torch.float64)
    return (precision * hits).sum().div(positives).item()


def mean_average_precision(scores: torch.Tensor, targets: torch.Tensor) -> float:
    """Macro mean of per-class AP over classes with at least one positive."""
    if scores.shape != targets.shape or scores.dim() != 2:
        raise InvalidArgument(f"expected matching (N, L) scores and targets, got {tuple(scores.shape)} and {tuple(targets.shape)}")
    check_binary(targets)
    values = [
        average_precision(scores[:, j], targets[:, j])
        for j in range(targets.shape[1])
        if targets[:, j].sum() > 0
    ]
    if not values:
        raise UndefinedMetricError("no class has a positive example")
    return sum(values) / len(values)
