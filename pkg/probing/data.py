"""
Labelled image datasets for probing and fine-tuning.

Evaluation applies no augmentation: images are decoded and, when
``image_size`` is set, resized to a square of that side.
"""
from __future__ import annotations

from typing import Sequence

import torch
import torch.nn.functional as F
from torch.utils.data import DataLoader, Dataset

from backbones.networks import as_batch
from geodistill.exceptions import ConfigError
from imaging.planes import load_plane
from runs.ingest import DatasetHandle

SINGLE_LABEL_LAYOUTS = ('classfolders',)
MULTI_LABEL_LAYOUTS = ('multilabel-manifest',)


def is_multilabel(handle: DatasetHandle) -> bool:
    if handle.layout in MULTI_LABEL_LAYOUTS:
        return True
    if handle.layout in SINGLE_LABEL_LAYOUTS:
        return False
    raise ConfigError(f"the {handle.layout!r} layout carries no classification labels")


def load_image(path, channels: int, image_size: int = 0, dtype: torch.dtype = torch.float32) -> torch.Tensor:
    tensor = load_plane(path, channels=channels, dtype=dtype).data
    if image_size and tuple(tensor.shape[-2:]) != (image_size, image_size):
        tensor = F.interpolate(tensor[None], size=(image_size, image_size), mode='bilinear', align_corners=False)[0]
        tensor = tensor.clamp(0.0, 1.0)
    return tensor


class LabelledImages(Dataset):
    """(image, target) pairs; targets are class indices or {0, 1} float vectors."""

    def __init__(self, handle: DatasetHandle, channels: int, image_size: int = 0):
        self.handle = handle
        self.multilabel = is_multilabel(handle)
        self.channels = channels
        self.image_size = image_size

    def __len__(self) -> int:
        return len(self.handle)

    def target(self, index: int) -> torch.Tensor:
        item = self.handle.items[index]
        if self.multilabel:
            return torch.tensor(item.targets, dtype=torch.float32)
        return torch.tensor(item.label, dtype=torch.long)

    def targets(self) -> torch.Tensor:
        return torch.stack([self.target(i) for i in range(len(self))])

    def __getitem__(self, index: int):
        image = load_image(self.handle.items[index].paths[0], self.channels, self.image_size)
        return image, self.target(index)


def collate_labelled(samples: Sequence[tuple[torch.Tensor, torch.Tensor]]):
    images, targets = zip(*samples)
    return as_batch(list(images)), torch.stack(targets)


def labelled_loader(
    handle: DatasetHandle,
    channels: int,
    image_size: int,
    batch_size: int,
    shuffle: bool = False,
    seed: int = 0,
    num_workers: int = 0,
) -> DataLoader:
    return DataLoader(
        LabelledImages(handle, channels, image_size),
        batch_size=batch_size,
        shuffle=shuffle,
        collate_fn=collate_labelled,
        num_workers=num_workers,
        generator=torch.Generator().manual_seed(seed),
    )
