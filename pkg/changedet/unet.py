"""
U-Net change detector on top of a frozen pretrained convnet encoder.

Both images of a pair go through the same encoder; the stem and the four
stage outputs are fused per tap by absolute difference and fed to a
decoder that upsamples bilinearly, concatenates the fused skip and applies
two conv-BN-ReLU layers per block. A last skip-free block refines the map at
input resolution, where a 1x1 convolution produces one change logit per pixel.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import torch
import torch.nn.functional as F
from torch import nn

from backbones.networks import extract_skips
from backbones.specs import BackboneSpec
from geodistill.exceptions import InvalidArgument, UnsupportedOperation
from imaging.planes import ImagePlane, load_mask, load_plane

logger = logging.getLogger(__name__)

FUSIONS = ('absdiff',)


@dataclass(frozen=True)
class ChangePair:
    """Two co-registered images of one location and their binary change mask."""

    image_a: ImagePlane
    image_b: ImagePlane
    mask: torch.Tensor
    key: str = ''

    def __post_init__(self):
        if self.image_a.data.shape != self.image_b.data.shape:
            raise InvalidArgument(f"pair {self.key!r}: images differ in shape {tuple(self.image_a.data.shape)} vs {tuple(self.image_b.data.shape)}")
        if tuple(self.mask.shape) != self.image_a.size:
            raise InvalidArgument(f"pair {self.key!r}: mask {tuple(self.mask.shape)} does not match images {self.image_a.size}")
        if not bool(((self.mask == 0) | (self.mask == 1)).all()):
            raise InvalidArgument(f"pair {self.key!r}: mask must be binary")

    @classmethod
    def load(cls, paths, mask_path: str | Path, channels: int, key: str = '', dtype: torch.dtype = torch.float32) -> "ChangePair":
        path_a, path_b = paths
        return cls(
            image_a=load_plane(path_a, channels=channels, dtype=dtype),
            image_b=load_plane(path_b, channels=channels, dtype=dtype),
            mask=load_mask(mask_path),
            key=key,
        )


@dataclass(frozen=True)
class UNetSpec:
    encoder: BackboneSpec
    decoder_widths: tuple[int, ...] = (128, 64, 32, 16)
    fusion: str = 'absdiff'

    def __post_init__(self):
        if not self.encoder.is_convnet:
            raise UnsupportedOperation(f"change detection needs a convnet encoder, got {self.encoder.family!r}")
        if len(self.decoder_widths) != len(self.skip_channels) - 1:
            raise InvalidArgument(f"expected {len(self.skip_channels) - 1} decoder widths, got {len(self.decoder_widths)}")
        if any(width < 1 for width in self.decoder_widths):
            raise InvalidArgument("decoder widths must be >= 1")
        if self.fusion not in FUSIONS:
            raise InvalidArgument(f"unknown fusion {self.fusion!r}")

    @property
    def skip_channels(self) -> tuple[int, ...]:
        return self.encoder.tap_channels

    def block_channels(self) -> list[tuple[int, int, int]]:
        """(incoming, skip, out) channels per decoder block, deepest first."""
        skips = list(reversed(self.skip_channels))
        incoming = skips[0]
        blocks = []
        for skip, width in zip(skips[1:], self.decoder_widths):
            blocks.append((incoming, skip, width))
            incoming = width
        return blocks


def conv_block(in_channels: int, out_channels: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(in_channels, out_channels, kernel_size=3, padding=1, bias=False),
        nn.BatchNorm2d(out_channels),
        nn.ReLU(inplace=True),
        nn.Conv2d(out_channels, out_channels, kernel_size=3, padding=1, bias=False),
        nn.BatchNorm2d(out_channels),
        nn.ReLU(inplace=True),
    )


class DecoderBlock(nn.Module):
    def __init__(self, in_channels: int, skip_channels: int, out_channels: int):
        super().__init__()
        self.convs = conv_block(in_channels + skip_channels, out_channels)

    def forward(self, x: torch.Tensor, skip: torch.Tensor) -> torch.Tensor:
        x = F.interpolate(x, size=skip.shape[-2:], mode='bilinear', align_corners=False)
        return self.convs(torch.cat([x, skip], dim=1))


class ChangeUNet(nn.Module):
    """Frozen encoder plus a trainable decoder; only ``decoder``, ``refine`` and ``head`` learn."""

    def __init__(self, spec: UNetSpec, encoder: nn.Module):
        super().__init__()
        if encoder.spec != spec.encoder:
            raise InvalidArgument("encoder module does not match the U-Net spec")
        self.spec = spec
        self.encoder = encoder
        for p in self.encoder.parameters():
            p.requires_grad_(False)
        self.decoder = nn.ModuleList(DecoderBlock(*channels) for channels in spec.block_channels())
        self.refine = conv_block(spec.decoder_widths[-1], spec.decoder_widths[-1])
        self.head = nn.Conv2d(spec.decoder_widths[-1], 1, kernel_size=1)
        logger.debug("Built change U-Net with %d decoder parameters", sum(p.numel() for p in self.decoder_parameters()))

    def train(self, mode: bool = True) -> "ChangeUNet":
        super().train(mode)
        self.encoder.eval()
        return self

    def decoder_parameters(self):
        yield from self.decoder.parameters()
        yield from self.refine.parameters()
        yield from self.head.parameters()

    def fuse(self, image_a: torch.Tensor, image_b: torch.Tensor) -> list[torch.Tensor]:
        """Per-tap |f(a) - f(b)|, stem first."""
        with torch.no_grad():
            taps_a = extract_skips(self.encoder, image_a)
            taps_b = extract_skips(self.encoder, image_b)
        return [(taps_a[name] - taps_b[name]).abs() for name in self.spec.encoder.skip_taps]

    def forward(self, image_a: torch.Tensor, image_b: torch.Tensor) -> torch.Tensor:
        """Change logits of shape (B, H, W)."""
        if image_a.shape != image_b.shape:
            raise InvalidArgument(f"pair halves differ in shape {tuple(image_a.shape)} vs {tuple(image_b.shape)}")
        if min(image_a.shape[-2:]) < self.spec.encoder.total_stride:
            raise InvalidArgument(f"input {tuple(image_a.shape[-2:])} is smaller than the encoder stride {self.spec.encoder.total_stride}")
        skips = self.fuse(image_a, image_b)
        x = skips[-1]
        for block, skip in zip(self.decoder, reversed(skips[:-1])):
            x = block(x, skip)
        x = F.interpolate(x, size=image_a.shape[-2:], mode='bilinear', align_corners=False)
        return self.head(self.refine(x))[:, 0]


def unet_forward(model: ChangeUNet, pair: ChangePair) -> torch.Tensor:
    """Logit map (H, W) for a single pair."""
    weight = model.head.weight
    image_a = pair.image_a.data[None].to(device=weight.device, dtype=weight.dtype)
    image_b = pair.image_b.data[None].to(device=weight.device, dtype=weight.dtype)
    return model(image_a, image_b)[0]
