"""Frozen-feature extraction from the teacher backbone of a checkpoint."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import torch
from torch import nn

from backbones.networks import backbone_forward
from geodistill.exceptions import InvalidArgument
from runs.checkpoints import Checkpoint
from runs.ingest import DatasetHandle

from .data import labelled_loader

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FeatureBank:
    vectors: torch.Tensor
    labels: torch.Tensor
    source: str = ''

    def __post_init__(self):
        if self.vectors.dim() != 2 or self.vectors.shape[0] < 1:
            raise InvalidArgument(f"feature bank needs an (N, D) matrix with N >= 1, got {tuple(self.vectors.shape)}")
        if self.labels.shape[0] != self.vectors.shape[0]:
            raise InvalidArgument(f"{self.vectors.shape[0]} vectors but {self.labels.shape[0]} labels")
        if self.labels.dim() not in (1, 2):
            raise InvalidArgument("labels must be class indices (N,) or binary vectors (N, L)")
        if not bool(torch.isfinite(self.vectors.norm(dim=1)).all()):
            raise InvalidArgument("feature vectors must have finite norms")

    def __len__(self) -> int:
        return self.vectors.shape[0]

    @property
    def multilabel(self) -> bool:
        return self.labels.dim() == 2

    @property
    def feature_dim(self) -> int:
        return self.vectors.shape[1]


@torch.no_grad()
def encode(backbone: nn.Module, loader, device: str | torch.device = 'cpu') -> tuple[torch.Tensor, torch.Tensor]:
    backbone.eval()
    dtype = next(backbone.parameters()).dtype
    vectors, labels = [], []
    for images, targets in loader:
        vectors.append(backbone_forward(backbone, images.to(device=device, dtype=dtype)).cpu())
        labels.append(targets)
    return torch.cat(vectors), torch.cat(labels)


def extract_features(
    checkpoint: Checkpoint,
    dataset: DatasetHandle,
    image_size: int = 0,
    batch_size: int = 64,
    device: str | torch.device = 'cpu',
) -> FeatureBank:
    """Teacher backbone features (pre-head) of every image in ``dataset``."""
    backbone = checkpoint.teacher_backbone().to(device)
    loader = labelled_loader(dataset, checkpoint.backbone_spec.in_channels, image_size, batch_size)
    vectors, labels = encode(backbone, loader, device)
    logger.info("Extracted %d x %d features from %s", *vectors.shape, dataset.dataset_id)
    return FeatureBank(vectors=vectors, labels=labels, source=checkpoint.content_hash)
