"""
Builders and the functional surface used by the training and evaluation apps.
"""
from __future__ import annotations

import logging
from collections import OrderedDict
from typing import Sequence, Union

import torch
from torch import nn

from geodistill.exceptions import InvalidArgument, UnsupportedOperation
from imaging.planes import ImagePlane

from .head import ProjectionHead
from .resnet import ResidualNet
from .specs import CONVNET_FAMILIES, PATCH_TRANSFORMER, BackboneSpec, ProjectionHeadSpec
from .vit import PatchTransformer

logger = logging.getLogger(__name__)

BACKBONE_BUILDERS = {family: ResidualNet for family in CONVNET_FAMILIES}
BACKBONE_BUILDERS[PATCH_TRANSFORMER] = PatchTransformer

Batch = Union[torch.Tensor, Sequence[Union[torch.Tensor, ImagePlane]]]


def build_backbone(spec: BackboneSpec) -> nn.Module:
    backbone = BACKBONE_BUILDERS[spec.family](spec)
    logger.debug("Built %s backbone with %d parameters", spec.family, count_parameters(backbone))
    return backbone


def build_head(spec: ProjectionHeadSpec, in_dim: int) -> ProjectionHead:
    return ProjectionHead(in_dim, spec)


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())


class DistillNetwork(nn.Module):
    """Backbone followed by the projection head; one instance each for student and teacher."""

    def __init__(self, backbone_spec: BackboneSpec, head_spec: ProjectionHeadSpec):
        super().__init__()
        self.backbone_spec = backbone_spec
        self.head_spec = head_spec
        self.backbone = build_backbone(backbone_spec)
        self.head = build_head(head_spec, backbone_spec.feature_dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.backbone(x))


def as_batch(batch: Batch) -> torch.Tensor:
    """Stack a batch of same-sized images into (B, C, H, W)."""
    if isinstance(batch, torch.Tensor):
        if batch.dim() != 4:
            raise InvalidArgument(f"expected a (B, C, H, W) batch, got shape {tuple(batch.shape)}")
        return batch
    tensors = [item.data if isinstance(item, ImagePlane) else item for item in batch]
    if not tensors:
        raise InvalidArgument("empty batch")
    shapes = {tuple(t.shape) for t in tensors}
    if len(shapes) > 1:
        raise InvalidArgument(f"batch mixes resolutions: {sorted(shapes)}")
    return torch.stack(tensors)


def backbone_forward(backbone: nn.Module, batch: Batch) -> torch.Tensor:
    """Features of shape (B, feature_dim) for a single-resolution batch."""
    x = as_batch(batch)
    spec: BackboneSpec = backbone.spec
    if x.shape[1] != spec.in_channels:
        raise InvalidArgument(f"backbone expects {spec.in_channels} channels, batch has {x.shape[1]}")
    if spec.is_convnet and min(x.shape[-2:]) < spec.total_stride:
        raise InvalidArgument(f"input {tuple(x.shape[-2:])} is smaller than the total stride {spec.total_stride}")
    return backbone(x)


def head_forward(head: ProjectionHead, features: torch.Tensor) -> torch.Tensor:
    """Prototype logits of shape (B, K)."""
    in_features = head.mlp[0].in_features
    if features.dim() != 2 or features.shape[1] != in_features:
        raise InvalidArgument(f"head expects (B, {in_features}) features, got {tuple(features.shape)}")
    return head(features)


def extract_skips(backbone: nn.Module, image: Batch) -> "OrderedDict[str, torch.Tensor]":
    """Feature maps at the stem and the four stage outputs."""
    spec: BackboneSpec = backbone.spec
    if not spec.is_convnet:
        raise UnsupportedOperation(f"skip taps are not defined for the {spec.family} family")
    if isinstance(image, ImagePlane):
        image = [image]
    elif isinstance(image, torch.Tensor) and image.dim() == 3:
        image = image.unsqueeze(0)
    return backbone.forward_taps(as_batch(image))
