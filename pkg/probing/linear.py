"""Linear probe: one zero-initialised linear layer trained on frozen features."""
from __future__ import annotations

import logging
import math

import torch
import torch.nn.functional as F
from torch import nn

from geodistill.exceptions import InvalidArgument, NonFiniteLossError

from .features import FeatureBank
from .metrics import classification_metrics

logger = logging.getLogger(__name__)


def train_linear(
    train: FeatureBank,
    num_classes: int,
    epochs: int = 100,
    lr: float = 1e-3,
    batch_size: int = 256,
    momentum: float = 0.9,
    seed: int = 0,
) -> nn.Linear:
    if train.multilabel:
        raise InvalidArgument("the linear probe needs a single-label feature bank")
    vectors = train.vectors.double()
    classifier = nn.Linear(train.feature_dim, num_classes).double()
    nn.init.zeros_(classifier.weight)
    nn.init.zeros_(classifier.bias)
    optimizer = torch.optim.SGD(classifier.parameters(), lr=lr, momentum=momentum)
    scheduler = torch.optim.lr_scheduler.CosineAnnealingLR(optimizer, T_max=max(epochs, 1))
    generator = torch.Generator().manual_seed(seed)

    for epoch in range(epochs):
        order = torch.randperm(len(train), generator=generator)
        for start in range(0, len(train), batch_size):
            index = order[start:start + batch_size]
            loss = F.cross_entropy(classifier(vectors[index]), train.labels[index])
            if not math.isfinite(loss.item()):
                raise NonFiniteLossError(f"linear probe loss became {loss.item()} in epoch {epoch}", {'epoch': epoch})
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
        scheduler.step()
        logger.debug("linear probe epoch %d loss %.4f", epoch, loss.item())
    return classifier


def linear_probe(
    train: FeatureBank,
    test: FeatureBank,
    epochs: int = 100,
    lr: float = 1e-3,
    batch_size: int = 256,
    seed: int = 0,
) -> dict[str, float]:
    if test.multilabel or train.feature_dim != test.feature_dim:
        raise InvalidArgument("train and test banks must be single-label with equal feature dims")
    num_classes = int(max(train.labels.max(), test.labels.max())) + 1
    classifier = train_linear(train, num_classes, epochs, lr, batch_size, seed=seed)
    with torch.no_grad():
        scores = classifier(test.vectors.double())
    return classification_metrics(scores, test.labels)
