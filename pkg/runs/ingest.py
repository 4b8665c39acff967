"""
Dataset folder ingestion.

Supported layouts:

- ``classfolders``: ``<root>/<class>/<image>``; labels follow sorted class names.
- ``multilabel-manifest``: images plus ``<root>/manifest.csv`` with rows
  ``filename,l1,...,lL`` (an optional header row is skipped).
- ``temporal-stacks``: ``<root>/<location>/<view>``, at least 3 views per
  location, all of one size.
- ``pair+mask``: ``<root>/<pair>/{a,b,mask}.<ext>``, mask values {0, 255}.

Every problem found is collected into one report before failing.
"""
from __future__ import annotations

import csv
import hashlib
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from geodistill.exceptions import IngestionError

logger = logging.getLogger(__name__)

IMAGE_EXTENSIONS = {'.png', '.jpg', '.jpeg', '.tif', '.tiff', '.bmp'}
MANIFEST_NAME = 'manifest.csv'
MIN_TEMPORAL_VIEWS = 3
LAYOUTS = ('classfolders', 'multilabel-manifest', 'temporal-stacks', 'pair+mask')


@dataclass(frozen=True)
class DatasetItem:
    key: str
    paths: tuple[Path, ...]
    label: int | None = None
    targets: tuple[int, ...] | None = None
    mask: Path | None = None


@dataclass(frozen=True)
class DatasetHandle:
    root: Path
    layout: str
    items: tuple[DatasetItem, ...]
    class_names: tuple[str, ...] = ()
    num_labels: int = 0
    splits: dict = field(default_factory=dict)
    seed: int = 0

    def __len__(self) -> int:
        return len(self.items)

    @property
    def fingerprint(self) -> str:
        digest = hashlib.sha256()
        for item in self.items:
            digest.update(item.key.encode('utf-8'))
            digest.update(b'\0')
        return digest.hexdigest()

    @property
    def dataset_id(self) -> str:
        return f"{self.root.name}:{self.layout}:{self.fingerprint[:12]}"

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    @property
    def split_sizes(self) -> dict:
        return {name: len(indices) for name, indices in self.splits.items()}

    def split(self, name: str) -> "DatasetHandle":
        if name not in self.splits:
            raise IngestionError(f"dataset has no {name!r} split", [f"available splits: {sorted(self.splits)}"])
        items = tuple(self.items[i] for i in self.splits[name])
        return replace(self, items=items, splits={name: tuple(range(len(items)))})

    def fraction(self, fraction: float, seed: int | None = None) -> "DatasetHandle":
        """Seeded subset holding ceil(fraction * N) items, in original order."""
        if fraction >= 1.0:
            return self
        count = max(1, math.ceil(fraction * len(self.items)))
        rng = np.random.default_rng(self.seed if seed is None else seed)
        keep = sorted(rng.permutation(len(self.items))[:count].tolist())
        items = tuple(self.items[i] for i in keep)
        return replace(self, items=items, splits={'subset': tuple(range(len(items)))})

    def image_paths(self) -> list[Path]:
        """Every image of every item (stack views and pair halves included), in order."""
        return [path for item in self.items for path in item.paths]


def _images_in(folder: Path) -> list[Path]:
    return sorted(p for p in folder.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_EXTENSIONS)


def _image_size(path: Path, report: list[str]) -> tuple[int, int] | None:
    try:
        with Image.open(path) as image:
            image.verify()
        with Image.open(path) as image:
            return image.size
    except (UnidentifiedImageError, OSError) as exc:
        report.append(f"{path}: undecodable image ({exc.__class__.__name__})")
        return None


def _ingest_classfolders(root: Path, report: list[str]):
    class_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not class_dirs:
        report.append(f"{root}: no class folders found")
    items = []
    for label, folder in enumerate(class_dirs):
        images = _images_in(folder)
        if not images:
            report.append(f"{folder}: class folder contains no images")
        for path in images:
            if _image_size(path, report) is not None:
                items.append(DatasetItem(key=f"{folder.name}/{path.name}", paths=(path,), label=label))
    return items, {'class_names': tuple(p.name for p in class_dirs)}


def _ingest_manifest(root: Path, report: list[str]):
    manifest = root / MANIFEST_NAME
    if not manifest.is_file():
        report.append(f"{root}: missing {MANIFEST_NAME}")
        return [], {}
    items, num_labels = [], None
    with manifest.open(newline='', encoding='utf-8') as handle:
        rows = [row for row in csv.reader(handle) if row and any(cell.strip() for cell in row)]
    for line, row in enumerate(rows, start=1):
        name, raw = row[0].strip(), [cell.strip() for cell in row[1:]]
        if line == 1 and not all(cell in ('0', '1') for cell in raw):
            continue
        if not raw or not all(cell in ('0', '1') for cell in raw):
            report.append(f"{MANIFEST_NAME} line {line}: labels must be 0 or 1, got {raw}")
            continue
        if num_labels is None:
            num_labels = len(raw)
        elif len(raw) != num_labels:
            report.append(f"{MANIFEST_NAME} line {line}: expected {num_labels} labels, got {len(raw)}")
            continue
        path = root / name
        if not path.is_file():
            report.append(f"{MANIFEST_NAME} line {line}: {name} does not exist")
            continue
        if _image_size(path, report) is not None:
            items.append(DatasetItem(key=name, paths=(path,), targets=tuple(int(c) for c in raw)))
    if not items and not report:
        report.append(f"{manifest}: no labelled rows")
    items.sort(key=lambda item: item.key)
    return items, {'num_labels': num_labels or 0}


def _ingest_stacks(root: Path, report: list[str]):
    items = []
    for folder in sorted(p for p in root.iterdir() if p.is_dir()):
        views = _images_in(folder)
        if len(views) < MIN_TEMPORAL_VIEWS:
            report.append(f"{folder}: {len(views)} views, temporal stacks need at least {MIN_TEMPORAL_VIEWS}")
            continue
        sizes = {_image_size(path, report) for path in views}
        if None in sizes:
            continue
        if len(sizes) > 1:
            report.append(f"{folder}: ragged stack, view sizes {sorted(sizes)}")
            continue
        items.append(DatasetItem(key=folder.name, paths=tuple(views)))
    if not items and not report:
        report.append(f"{root}: no temporal stacks found")
    return items, {}


def _find_one(folder: Path, stem: str) -> Path | None:
    matches = [p for p in _images_in(folder) if p.stem == stem]
    return matches[0] if matches else None


def _ingest_pairs(root: Path, report: list[str]):
    items = []
    for folder in sorted(p for p in root.iterdir() if p.is_dir()):
        a, b, mask = (_find_one(folder, stem) for stem in ('a', 'b', 'mask'))
        missing = [stem for stem, path in (('a', a), ('b', b), ('mask', mask)) if path is None]
        if missing:
            report.append(f"{folder}: missing {', '.join(missing)}")
            continue
        sizes = {_image_size(path, report) for path in (a, b, mask)}
        if None in sizes:
            continue
        if len(sizes) > 1:
            report.append(f"{folder}: pair and mask sizes differ {sorted(sizes)}")
            continue
        with Image.open(mask) as image:
            values = set(np.unique(np.asarray(image.convert('L'))).tolist())
        if not values <= {0, 255}:
            report.append(f"{mask}: mask values must be 0 or 255")
            continue
        items.append(DatasetItem(key=folder.name, paths=(a, b), mask=mask))
    if not items and not report:
        report.append(f"{root}: no image pairs found")
    return items, {}


INGESTERS = {
    'classfolders': _ingest_classfolders,
    'multilabel-manifest': _ingest_manifest,
    'temporal-stacks': _ingest_stacks,
    'pair+mask': _ingest_pairs,
}


def assign_splits(count: int, fractions: dict, seed: int) -> dict:
    """Seeded shuffle cut into consecutive chunks; a last split completing 1.0 takes the remainder."""
    order = np.random.default_rng(seed).permutation(count).tolist()
    names = list(fractions)
    splits, start = {}, 0
    for position, name in enumerate(names):
        is_last = position == len(names) - 1
        if is_last and abs(sum(fractions.values()) - 1.0) < 1e-9:
            size = count - start
        else:
            size = int(math.floor(fractions[name] * count))
        splits[name] = tuple(sorted(order[start:start + size]))
        start += size
    return splits


def ingest_folder(path, layout: str, splits: dict | None = None, seed: int = 0) -> DatasetHandle:
    root = Path(path)
    if layout not in INGESTERS:
        raise IngestionError(f"unknown layout {layout!r}", [f"choose one of {list(LAYOUTS)}"])
    if not root.is_dir():
        raise IngestionError(f"dataset folder {root} does not exist", [f"{root}: not a directory"])

    report: list[str] = []
    items, extra = INGESTERS[layout](root, report)
    if report:
        for problem in report:
            logger.warning("Ingestion problem: %s", problem)
        raise IngestionError(f"{len(report)} problem(s) while ingesting {root} as {layout}", report)

    fractions = splits or {'all': 1.0}
    handle = DatasetHandle(
        root=root,
        layout=layout,
        items=tuple(items),
        splits=assign_splits(len(items), fractions, seed),
        seed=seed,
        **extra,
    )
    logger.info("Ingested %d items from %s (%s), splits %s", len(handle), root, layout, handle.split_sizes)
    return handle
