"""
Weighted nearest-neighbour probe on frozen features.

Each test vector votes with its k most cosine-similar training vectors,
neighbour weight exp(similarity / temperature). Neighbours with equal
similarity are taken in training order and vote ties go to the lower
class index.
"""
from __future__ import annotations

import torch
import torch.nn.functional as F

from geodistill.exceptions import InvalidArgument

from .features import FeatureBank
from .metrics import classification_metrics

DEFAULT_K = 20
DEFAULT_TEMPERATURE = 0.07


def _check_banks(train: FeatureBank, test: FeatureBank, k: int, temperature: float) -> None:
    if train.multilabel or test.multilabel:
        raise InvalidArgument("the nearest-neighbour probe needs single-label feature banks")
    if train.feature_dim != test.feature_dim:
        raise InvalidArgument(f"train features have {train.feature_dim} dims, test features {test.feature_dim}")
    if not 1 <= k <= len(train):
        raise InvalidArgument(f"k must lie in [1, {len(train)}], got {k}")
    if not temperature > 0:
        raise InvalidArgument(f"temperature must be positive, got {temperature}")


def knn_scores(
    train: FeatureBank, test: FeatureBank, k: int = DEFAULT_K, temperature: float = DEFAULT_TEMPERATURE, num_classes: int | None = None
) -> torch.Tensor:
    """Per-class vote totals of shape (M, C)."""
    _check_banks(train, test, k, temperature)
    num_classes = num_classes or int(max(train.labels.max(), test.labels.max())) + 1
    train_vectors = F.normalize(train.vectors.double(), dim=1)
    test_vectors = F.normalize(test.vectors.double(), dim=1)
    similarity = test_vectors @ train_vectors.T
    ranked = torch.sort(similarity, dim=1, descending=True, stable=True)
    top_similarity, top_index = ranked.values[:, :k], ranked.indices[:, :k]
    weights = torch.exp(top_similarity / temperature)
    votes = torch.zeros(len(test), num_classes, dtype=torch.float64)
    votes.scatter_add_(1, train.labels[top_index], weights)
    return votes


def knn_probe(
    train: FeatureBank, test: FeatureBank, k: int = DEFAULT_K, temperature: float = DEFAULT_TEMPERATURE
) -> dict[str, float]:
    return classification_metrics(knn_scores(train, test, k, temperature), test.labels)
