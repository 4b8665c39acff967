"""
Procedural desk-scale datasets.

Each kind writes PNG files in one of the ingestible layouts plus a
``dataset.json`` description. Every instance draws from its own generator
seeded by (seed, index), so the same seed always writes the same bytes.
"""
from __future__ import annotations

import csv
import json
import logging
from pathlib import Path

import numpy as np
from PIL import Image

from geodistill.exceptions import InvalidArgument

logger = logging.getLogger(__name__)

TEXTURE_CLASSES = ('stripes-h', 'stripes-v', 'checker', 'rings')
TEXTURE_TINTS = np.array([
    [0.85, 0.35, 0.30],
    [0.30, 0.80, 0.35],
    [0.30, 0.40, 0.90],
    [0.75, 0.75, 0.30],
])
MOTIFS = ('square', 'disc', 'cross')
KIND_LAYOUTS = {
    'textures-4class': 'classfolders',
    'multilabel-motifs': 'multilabel-manifest',
    'temporal-drift-stacks': 'temporal-stacks',
    'change-pairs': 'pair+mask',
}
KINDS = tuple(KIND_LAYOUTS)


def _generator(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, index])


def _to_uint8(image: np.ndarray) -> np.ndarray:
    return np.round(np.clip(image, 0.0, 1.0) * 255).astype(np.uint8)


def _save(array: np.ndarray, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(array).save(path, format='PNG')


def _grid(size: int) -> tuple[np.ndarray, np.ndarray]:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) / size
    return yy, xx


def smooth_field(rng: np.random.Generator, size: int, blobs: int = 6) -> np.ndarray:
    """RGB scene built from a few coloured Gaussian blobs over a flat background."""
    yy, xx = _grid(size)
    scene = np.broadcast_to(rng.uniform(0.2, 0.5, 3), (size, size, 3)).copy()
    for _ in range(blobs):
        cy, cx = rng.uniform(0, 1, 2)
        width = rng.uniform(0.05, 0.25)
        weight = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * width ** 2))
        scene += weight[..., None] * rng.uniform(-0.3, 0.4, 3)
    return np.clip(scene, 0.0, 1.0)


def texture_image(rng: np.random.Generator, label: int, size: int) -> np.ndarray:
    yy, xx = _grid(size)
    freq = rng.uniform(4, 8)
    phase = rng.uniform(0, 2 * np.pi)
    if label == 0:
        pattern = 0.5 + 0.5 * np.sin(2 * np.pi * freq * yy + phase)
    elif label == 1:
        pattern = 0.5 + 0.5 * np.sin(2 * np.pi * freq * xx + phase)
    elif label == 2:
        pattern = (np.sin(2 * np.pi * freq * xx + phase) * np.sin(2 * np.pi * freq * yy + phase) > 0).astype(np.float64)
    else:
        cy, cx = rng.uniform(0.3, 0.7, 2)
        pattern = 0.5 + 0.5 * np.sin(2 * np.pi * freq * np.hypot(yy - cy, xx - cx) * 2 + phase)
    tint = np.clip(TEXTURE_TINTS[label] + rng.normal(0, 0.05, 3), 0, 1)
    image = 0.15 + 0.7 * pattern[..., None] * tint + rng.normal(0, 0.03, (size, size, 3))
    return _to_uint8(image)


def motif_mask(rng: np.random.Generator, motif: str, size: int) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size]
    half = max(2, size // 8)
    cy, cx = rng.integers(half, size - half, 2)
    if motif == 'square':
        return (np.abs(yy - cy) <= half) & (np.abs(xx - cx) <= half)
    if motif == 'disc':
        return (yy - cy) ** 2 + (xx - cx) ** 2 <= half ** 2
    bar = max(1, half // 3)
    return ((np.abs(yy - cy) <= bar) & (np.abs(xx - cx) <= half)) | ((np.abs(xx - cx) <= bar) & (np.abs(yy - cy) <= half))


def motif_image(rng: np.random.Generator, size: int) -> tuple[np.ndarray, list[int]]:
    image = 0.4 + rng.normal(0, 0.05, (size, size, 3))
    labels = []
    for motif in MOTIFS:
        present = int(rng.random() < 0.5)
        labels.append(present)
        if present:
            image[motif_mask(rng, motif, size)] = rng.uniform(0.75, 1.0, 3)
    return _to_uint8(image), labels


def drift_stack(rng: np.random.Generator, size: int, views: int) -> list[np.ndarray]:
    """One scene under per-view brightness and colour drift; structure never moves."""
    scene = smooth_field(rng, size)
    for _ in range(3):
        scene[motif_mask(rng, MOTIFS[int(rng.integers(len(MOTIFS)))], size)] = rng.uniform(0, 1, 3)
    stack = []
    for _ in range(views):
        brightness = rng.uniform(0.75, 1.25)
        gains = 1.0 + rng.uniform(-0.12, 0.12, 3)
        stack.append(_to_uint8(scene * brightness * gains))
    return stack


def change_pair(rng: np.random.Generator, size: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Image a, image b and the exact mask of pixels that differ between them."""
    base = smooth_field(rng, size)
    a, b = base.copy(), base.copy()
    for _ in range(int(rng.integers(1, 4))):
        region = motif_mask(rng, MOTIFS[int(rng.integers(len(MOTIFS)))], size)
        colour = rng.uniform(0, 1, 3)
        if rng.random() < 0.5:
            b[region] = colour
        else:
            a[region] = colour
    a, b = _to_uint8(a), _to_uint8(b)
    mask = np.where((a != b).any(axis=-1), 255, 0).astype(np.uint8)
    return a, b, mask


def synth_generate(kind: str, n: int, seed: int, path: str | Path, size: int = 64, views: int = 5) -> Path:
    """Write ``n`` instances of ``kind`` under ``path`` and return it."""
    if kind not in KIND_LAYOUTS:
        raise InvalidArgument(f"unknown dataset kind {kind!r}; choose one of {list(KINDS)}")
    if n < 1:
        raise InvalidArgument(f"n must be >= 1, got {n}")
    if size < 8:
        raise InvalidArgument(f"size must be >= 8, got {size}")
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    description = {'kind': kind, 'layout': KIND_LAYOUTS[kind], 'n': n, 'seed': seed, 'size': size}

    if kind == 'textures-4class':
        for index in range(n):
            label = index % len(TEXTURE_CLASSES)
            _save(texture_image(_generator(seed, index), label, size), root / TEXTURE_CLASSES[label] / f"{index:05d}.png")
        description['classes'] = list(TEXTURE_CLASSES)

    elif kind == 'multilabel-motifs':
        rows = []
        for index in range(n):
            image, labels = motif_image(_generator(seed, index), size)
            name = f"images/{index:05d}.png"
            _save(image, root / name)
            rows.append([name, *labels])
        with (root / 'manifest.csv').open('w', newline='', encoding='utf-8') as handle:
            writer = csv.writer(handle, lineterminator='\n')
            writer.writerow(['filename', *MOTIFS])
            writer.writerows(rows)
        description['labels'] = list(MOTIFS)

    elif kind == 'temporal-drift-stacks':
        if views < 3:
            raise InvalidArgument(f"temporal stacks need at least 3 views, got {views}")
        for index in range(n):
            for t, view in enumerate(drift_stack(_generator(seed, index), size, views)):
                _save(view, root / f"loc{index:05d}" / f"t{t}.png")
        description['views'] = views

    else:
        for index in range(n):
            a, b, mask = change_pair(_generator(seed, index), size)
            _save(a, root / f"pair{index:05d}" / 'a.png')
            _save(b, root / f"pair{index:05d}" / 'b.png')
            _save(mask, root / f"pair{index:05d}" / 'mask.png')

    (root / 'dataset.json').write_text(json.dumps(description, sort_keys=True, indent=2) + '\n', encoding='utf-8')
    logger.info("Generated %d %s instances under %s", n, kind, root)
    return root
