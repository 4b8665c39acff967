"""
ImagePlane: the pixel carrier every transform consumes and produces.

Planes are channels-first (C, H, W) float tensors with values in [0, 1].
File I/O decodes 8-bit and 16-bit images to that range.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from geodistill.exceptions import InvalidArgument


@dataclass(frozen=True)
class ImagePlane:
    """Dense image with values in [0, 1] laid out as (channels, height, width)."""

    data: torch.Tensor

    def __post_init__(self):
        if not isinstance(self.data, torch.Tensor):
            raise InvalidArgument(f"ImagePlane data must be a tensor, got {type(self.data).__name__}")
        if self.data.dim() != 3:
            raise InvalidArgument(f"ImagePlane data must be (C, H, W), got shape {tuple(self.data.shape)}")
        channels, height, width = self.data.shape
        if channels < 1 or height < 1 or width < 1:
            raise InvalidArgument(f"ImagePlane dimensions must be >= 1, got {tuple(self.data.shape)}")
        if not self.data.is_floating_point():
            raise InvalidArgument("ImagePlane data must be floating point")
        if not bool(torch.isfinite(self.data).all()):
            raise InvalidArgument("ImagePlane contains non-finite values")
        if bool((self.data < 0).any()) or bool((self.data > 1).any()):
            raise InvalidArgument("ImagePlane values must lie in [0, 1]")

    @property
    def channels(self) -> int:
        return int(self.data.shape[0])

    @property
    def height(self) -> int:
        return int(self.data.shape[1])

    @property
    def width(self) -> int:
        return int(self.data.shape[2])

    @property
    def size(self) -> tuple[int, int]:
        return self.height, self.width

    @classmethod
    def from_array(cls, array: np.ndarray, dtype: torch.dtype = torch.float32) -> "ImagePlane":
        """Build a plane from an (H, W) or (H, W, C) array already scaled to [0, 1]."""
        if array.ndim == 2:
            array = array[:, :, None]
        tensor = torch.from_numpy(np.ascontiguousarray(array.transpose(2, 0, 1))).to(dtype)
        return cls(tensor)

    def to_array(self) -> np.ndarray:
        """Return an (H, W, C) float64 copy."""
        return self.data.detach().cpu().to(torch.float64).permute(1, 2, 0).numpy().copy()


def decode_image(image: Image.Image) -> np.ndarray:
    """Convert a PIL image to an (H, W, C) float64 array in [0, 1]."""
    if image.mode in ('I;16', 'I;16B', 'I;16L', 'I'):
        array = np.asarray(image, dtype=np.float64) / 65535.0
        return np.clip(array, 0.0, 1.0)[:, :, None]
    if image.mode not in ('L', 'RGB'):
        image = image.convert('RGB')
    array = np.asarray(image, dtype=np.float64) / 255.0
    if array.ndim == 2:
        array = array[:, :, None]
    return array


def load_plane(path: str | Path, channels: int | None = None, dtype: torch.dtype = torch.float32) -> ImagePlane:
    """Decode an image file into a plane; grayscale files are tiled to ``channels`` if asked."""
    with Image.open(path) as image:
        image.load()
        array = decode_image(image)
    if channels is not None and array.shape[2] != channels:
        if array.shape[2] == 1:
            array = np.repeat(array, channels, axis=2)
        else:
            raise InvalidArgument(f"{path}: expected {channels} channels, found {array.shape[2]}")
    return ImagePlane.from_array(array, dtype=dtype)


def save_plane(plane: ImagePlane, path: str | Path) -> None:
    """Write a plane as an 8-bit PNG (1 or 3 channels)."""
    array = np.round(plane.to_array() * 255.0).astype(np.uint8)
    if array.shape[2] == 1:
        Image.fromarray(array[:, :, 0]).save(path)
    elif array.shape[2] == 3:
        Image.fromarray(array).save(path)
    else:
        raise InvalidArgument(f"cannot encode a {array.shape[2]}-channel plane as PNG")


def load_mask(path: str | Path) -> torch.Tensor:
    """Read a {0, 255} single-channel mask as a (H, W) uint8 tensor of {0, 1}."""
    with Image.open(path) as image:
        array = np.asarray(image.convert('L'))
    values = set(np.unique(array).tolist())
    if not values <= {0, 255}:
        raise InvalidArgument(f"{path}: mask values must be 0 or 255, found {sorted(values)[:5]}")
    return torch.from_numpy((array == 255).astype(np.uint8))


def save_mask(mask: torch.Tensor, path: str | Path) -> None:
    array = (mask.detach().cpu().numpy() > 0).astype(np.uint8) * 255
    Image.fromarray(array).save(path)
