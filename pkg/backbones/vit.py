"""
Tiny patch transformer with a class token and a learned position grid.

The grid is learned at ``native_size``; other input sizes get a bicubically
interpolated grid, so multi-sized local crops run through the same weights.
"""
from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn

from geodistill.exceptions import InvalidArgument

from .specs import BackboneSpec


class MLP(nn.Module):
    def __init__(self, dim: int, hidden_dim: int):
        super().__init__()
        self.fc1 = nn.Linear(dim, hidden_dim)
        self.act = nn.GELU()
        self.fc2 = nn.Linear(hidden_dim, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc2(self.act(self.fc1(x)))


class Block(nn.Module):
    """Pre-norm transformer block."""

    def __init__(self, dim: int, num_heads: int, mlp_ratio: int = 4):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim, eps=1e-6)
        self.attn = nn.MultiheadAttention(dim, num_heads, batch_first=True)
        self.norm2 = nn.LayerNorm(dim, eps=1e-6)
        self.mlp = MLP(dim, dim * mlp_ratio)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        y = self.norm1(x)
        x = x + self.attn(y, y, y, need_weights=False)[0]
        return x + self.mlp(self.norm2(x))


class PatchTransformer(nn.Module):
    def __init__(self, spec: BackboneSpec):
        super().__init__()
        self.spec = spec
        self.patch_size = spec.patch_size
        self.patch_embed = nn.Conv2d(spec.in_channels, spec.embed_dim, kernel_size=spec.patch_size, stride=spec.patch_size)
        grid = spec.native_size // spec.patch_size
        self.cls_token = nn.Parameter(torch.zeros(1, 1, spec.embed_dim))
        self.pos_embed = nn.Parameter(torch.zeros(1, 1 + grid * grid, spec.embed_dim))
        self.blocks = nn.ModuleList(Block(spec.embed_dim, spec.num_heads) for _ in range(spec.depth))
        self.norm = nn.LayerNorm(spec.embed_dim, eps=1e-6)
        nn.init.trunc_normal_(self.pos_embed, std=0.02)
        nn.init.trunc_normal_(self.cls_token, std=0.02)
        self.apply(self._init_weights)

    @staticmethod
    def _init_weights(module):
        if isinstance(module, nn.Linear):
            nn.init.trunc_normal_(module.weight, std=0.02)
            if module.bias is not None:
                nn.init.zeros_(module.bias)
        elif isinstance(module, nn.LayerNorm):
            nn.init.ones_(module.weight)
            nn.init.zeros_(module.bias)

    @property
    def feature_dim(self) -> int:
        return self.spec.embed_dim

    def fit_to_patches(self, x: torch.Tensor) -> torch.Tensor:
        """Resize down to the nearest patch multiple, or reject when resizing is off."""
        height, width = x.shape[-2:]
        p = self.patch_size
        if height % p == 0 and width % p == 0:
            return x
        if not self.spec.patch_resize:
            raise InvalidArgument(f"input {height}x{width} is not divisible by patch size {p}")
        target = (height // p * p, width // p * p)
        if min(target) == 0:
            raise InvalidArgument(f"input {height}x{width} is smaller than one {p}px patch")
        return F.interpolate(x, size=target, mode='bilinear', align_corners=False)

    def interpolate_pos_encoding(self, rows: int, cols: int) -> torch.Tensor:
        native = self.pos_embed.shape[1] - 1
        grid = int(math.sqrt(native))
        if rows == cols == grid:
            return self.pos_embed
        cls_pos, patch_pos = self.pos_embed[:, :1], self.pos_embed[:, 1:]
        dim = patch_pos.shape[-1]
        patch_pos = patch_pos.reshape(1, grid, grid, dim).permute(0, 3, 1, 2)
        patch_pos = F.interpolate(patch_pos, size=(rows, cols), mode='bicubic', align_corners=False)
        patch_pos = patch_pos.permute(0, 2, 3, 1).reshape(1, rows * cols, dim)
        return torch.cat((cls_pos, patch_pos), dim=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = self.fit_to_patches(x)
        tokens = self.patch_embed(x)
        rows, cols = tokens.shape[-2:]
        tokens = tokens.flatten(2).transpose(1, 2)
        cls = self.cls_token.expand(tokens.shape[0], -1, -1)
        tokens = torch.cat((cls, tokens), dim=1) + self.interpolate_pos_encoding(rows, cols)
        for block in self.blocks:
            tokens = block(tokens)
        return self.norm(tokens)[:, 0]
