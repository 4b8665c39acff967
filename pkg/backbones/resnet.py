"""
Tiny residual and wide-residual networks built from bottleneck blocks.

Layout: 3x3 stride-2 stem (``conv1``), then four stages ``layer1``..``layer4``
with strides (1, 2, 2, 2), then global average pooling. The pooled vector is
the feature; the stem and stage outputs are the skip taps.
"""
from __future__ import annotations

from collections import OrderedDict

import torch
from torch import nn

from .specs import STAGE_STRIDES, STEM_STRIDE, BackboneSpec


class Bottleneck(nn.Module):
    """1x1 reduce, 3x3 (strided), 1x1 expand, with a projection shortcut when shapes change."""

    def __init__(self, in_channels: int, mid_channels: int, out_channels: int, stride: int = 1):
        super().__init__()
        self.conv1 = nn.Conv2d(in_channels, mid_channels, kernel_size=1, bias=False)
        self.bn1 = nn.BatchNorm2d(mid_channels)
        self.conv2 = nn.Conv2d(mid_channels, mid_channels, kernel_size=3, stride=stride, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(mid_channels)
        self.conv3 = nn.Conv2d(mid_channels, out_channels, kernel_size=1, bias=False)
        self.bn3 = nn.BatchNorm2d(out_channels)
        self.relu = nn.ReLU(inplace=True)
        self.downsample = None
        if stride != 1 or in_channels != out_channels:
            self.downsample = nn.Sequential(
                nn.Conv2d(in_channels, out_channels, kernel_size=1, stride=stride, bias=False),
                nn.BatchNorm2d(out_channels),
            )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        identity = x if self.downsample is None else self.downsample(x)
        out = self.relu(self.bn1(self.conv1(x)))
        out = self.relu(self.bn2(self.conv2(out)))
        out = self.bn3(self.conv3(out))
        return self.relu(out + identity)


class ResidualNet(nn.Module):
    def __init__(self, spec: BackboneSpec):
        super().__init__()
        self.spec = spec
        stem_channels = spec.stage_channels[0]
        self.conv1 = nn.Sequential(
            nn.Conv2d(spec.in_channels, stem_channels, kernel_size=3, stride=STEM_STRIDE, padding=1, bias=False),
            nn.BatchNorm2d(stem_channels),
            nn.ReLU(inplace=True),
        )
        in_channels = stem_channels
        for index, (channels, depth, stride, mid) in enumerate(
            zip(spec.stage_channels, spec.depth_per_stage, STAGE_STRIDES, spec.bottleneck_channels), start=1
        ):
            blocks = []
            for block in range(depth):
                blocks.append(Bottleneck(in_channels, mid, channels, stride if block == 0 else 1))
                in_channels = channels
            setattr(self, f'layer{index}', nn.Sequential(*blocks))
        self.pool = nn.AdaptiveAvgPool2d(1)
        self._init_weights()

    def _init_weights(self):
        for module in self.modules():
            if isinstance(module, nn.Conv2d):
                nn.init.kaiming_normal_(module.weight, mode='fan_out', nonlinearity='relu')
            elif isinstance(module, nn.BatchNorm2d):
                nn.init.ones_(module.weight)
                nn.init.zeros_(module.bias)

    @property
    def feature_dim(self) -> int:
        return self.spec.feature_dim

    def forward_taps(self, x: torch.Tensor) -> "OrderedDict[str, torch.Tensor]":
        taps = OrderedDict()
        x = self.conv1(x)
        taps['conv1'] = x
        for name in ('layer1', 'layer2', 'layer3', 'layer4'):
            x = getattr(self, name)(x)
            taps[name] = x
        return taps

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return torch.flatten(self.pool(self.forward_taps(x)['layer4']), 1)
