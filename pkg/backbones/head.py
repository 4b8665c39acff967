from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from .specs import ProjectionHeadSpec


class PrototypeLayer(nn.Module):
    """Bias-free linear map whose weight rows are renormalized to unit length on every call."""

    def __init__(self, in_dim: int, num_prototypes: int):
        super().__init__()
        self.weight = nn.Parameter(torch.empty(num_prototypes, in_dim))
        nn.init.trunc_normal_(self.weight, std=0.02)

    def normalized_weight(self) -> torch.Tensor:
        return F.normalize(self.weight, dim=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return F.linear(x, self.normalized_weight())


class ProjectionHead(nn.Module):
    """MLP to a bottleneck, L2 normalization, then K prototype logits."""

    def __init__(self, in_dim: int, spec: ProjectionHeadSpec):
        super().__init__()
        self.spec = spec
        if spec.num_layers == 1:
            layers = [nn.Linear(in_dim, spec.bottleneck_dim)]
        else:
            layers = [nn.Linear(in_dim, spec.hidden_dim), nn.GELU()]
            for _ in range(spec.num_layers - 2):
                layers += [nn.Linear(spec.hidden_dim, spec.hidden_dim), nn.GELU()]
            layers.append(nn.Linear(spec.hidden_dim, spec.bottleneck_dim))
        self.mlp = nn.Sequential(*layers)
        self.prototypes = PrototypeLayer(spec.bottleneck_dim, spec.num_prototypes)
        for module in self.mlp:
            if isinstance(module, nn.Linear):
                nn.init.trunc_normal_(module.weight, std=0.02)
                nn.init.zeros_(module.bias)

    def bottleneck(self, x: torch.Tensor) -> torch.Tensor:
        return F.normalize(self.mlp(x), dim=-1, eps=1e-12)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.prototypes(self.bottleneck(x))
