"""
Checkpoint container.

A checkpoint is a stored (uncompressed) ZIP archive with fixed timestamps and
sorted entries:

    manifest.json                      specs, step, config, provenance, array index
    arrays/<group>/<name>.bin          one little-endian blob per named tensor

Groups are ``teacher``, ``student`` (optional) and ``center`` (optional).
``manifest.json`` carries a SHA-256 over its own body and every blob, checked
on load; saving a loaded checkpoint reproduces the file byte for byte.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from backbones.networks import DistillNetwork
from backbones.specs import BackboneSpec, ProjectionHeadSpec
from geodistill.exceptions import CheckpointError

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
MANIFEST_NAME = 'manifest.json'
ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)
GROUPS = ('teacher', 'student', 'center')
FLOAT_DTYPES = {32: torch.float32, 64: torch.float64}


def _encode(tensor: torch.Tensor) -> tuple[bytes, str, list[int]]:
    array = tensor.detach().cpu().contiguous().numpy()
    dtype = array.dtype.newbyteorder('<')
    return array.astype(dtype, copy=False).tobytes(), dtype.str, list(array.shape)


def _decode(blob: bytes, dtype: str, shape: list[int]) -> torch.Tensor:
    array = np.frombuffer(blob, dtype=np.dtype(dtype)).reshape(shape)
    return torch.from_numpy(array.astype(array.dtype.newbyteorder('='), copy=True))


def _dumps(body: dict) -> bytes:
    return json.dumps(body, sort_keys=True, indent=2).encode('utf-8')


def content_hash(body: dict, blobs: dict[str, bytes]) -> str:
    digest = hashlib.sha256(_dumps(body))
    for name in sorted(blobs):
        digest.update(name.encode('utf-8'))
        digest.update(blobs[name])
    return digest.hexdigest()


@dataclass
class Checkpoint:
    backbone_spec: BackboneSpec
    head_spec: ProjectionHeadSpec
    teacher: dict[str, torch.Tensor]
    student: dict[str, torch.Tensor] | None = None
    center: torch.Tensor | None = None
    step: int = 0
    float_width: int = 32
    config: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    content_hash: str = ''

    @classmethod
    def from_networks(
        cls,
        teacher: DistillNetwork,
        student: DistillNetwork | None = None,
        center: torch.Tensor | None = None,
        **fields_,
    ) -> "Checkpoint":
        float_width = 64 if next(teacher.parameters()).dtype == torch.float64 else 32
        return cls(
            backbone_spec=teacher.backbone_spec,
            head_spec=teacher.head_spec,
            teacher={k: v.detach().cpu().clone() for k, v in teacher.state_dict().items()},
            student=None if student is None else {k: v.detach().cpu().clone() for k, v in student.state_dict().items()},
            center=None if center is None else center.detach().cpu().clone(),
            float_width=float_width,
            **fields_,
        )

    @property
    def dtype(self) -> torch.dtype:
        return FLOAT_DTYPES[self.float_width]

    def _groups(self) -> dict[str, dict[str, torch.Tensor]]:
        groups = {'teacher': self.teacher}
        if self.student is not None:
            groups['student'] = self.student
        if self.center is not None:
            groups['center'] = {'c': self.center}
        return groups

    def _build(self, state: dict[str, torch.Tensor]) -> DistillNetwork:
        network = DistillNetwork(self.backbone_spec, self.head_spec).to(dtype=self.dtype)
        try:
            network.load_state_dict(state, strict=True)
        except RuntimeError as exc:
            raise CheckpointError(f"checkpoint parameters do not match the recorded specs: {exc}") from exc
        return network

    def teacher_network(self) -> DistillNetwork:
        network = self._build(self.teacher)
        network.eval()
        return network

    def student_network(self) -> DistillNetwork:
        if self.student is None:
            raise CheckpointError("checkpoint was saved without student parameters")
        return self._build(self.student)

    def teacher_backbone(self) -> nn.Module:
        """The feature extractor used by every downstream task."""
        return self.teacher_network().backbone

    def save(self, path: str | Path) -> str:
        """Write atomically and return the content hash."""
        path = Path(path)
        blobs, arrays = {}, []
        for group, tensors in self._groups().items():
            for name in sorted(tensors):
                data, dtype, shape = _encode(tensors[name])
                entry = f"arrays/{group}/{name}.bin"
                blobs[entry] = data
                arrays.append({'group': group, 'name': name, 'dtype': dtype, 'shape': shape, 'file': entry})
        body = {
            'format_version': FORMAT_VERSION,
            'backbone_spec': self.backbone_spec.to_dict(),
            'head_spec': self.head_spec.to_dict(),
            'step': self.step,
            'float_width': self.float_width,
            'config': self.config,
            'provenance': self.provenance,
            'arrays': arrays,
        }
        self.content_hash = content_hash(body, blobs)
        manifest = _dumps({**body, 'content_hash': self.content_hash})

        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.name + '.tmp')
        with zipfile.ZipFile(tmp, 'w', compression=zipfile.ZIP_STORED) as archive:
            for name, data in sorted([(MANIFEST_NAME, manifest), *blobs.items()]):
                info = zipfile.ZipInfo(name, date_time=ZIP_EPOCH)
                info.external_attr = 0o644 << 16
                archive.writestr(info, data)
        os.replace(tmp, path)
        logger.info("Saved checkpoint %s (step %d, hash %s)", path, self.step, self.content_hash[:12])
        return self.content_hash

    @classmethod
    def load(cls, path: str | Path) -> "Checkpoint":
        path = Path(path)
        if not path.is_file():
            raise CheckpointError(f"checkpoint {path} does not exist")
        try:
            with zipfile.ZipFile(path) as archive:
                manifest = json.loads(archive.read(MANIFEST_NAME))
                recorded = manifest.pop('content_hash')
                blobs = {entry['file']: archive.read(entry['file']) for entry in manifest['arrays']}
        except (zipfile.BadZipFile, KeyError, ValueError, OSError) as exc:
            raise CheckpointError(f"checkpoint {path} is unreadable: {exc}") from exc

        if manifest.get('format_version') != FORMAT_VERSION:
            raise CheckpointError(f"unsupported checkpoint format {manifest.get('format_version')!r}")
        actual = content_hash(manifest, blobs)
        if actual != recorded:
            raise CheckpointError(f"checkpoint {path} failed hash verification (expected {recorded[:12]}, got {actual[:12]})")

        groups: dict[str, dict[str, torch.Tensor]] = {}
        try:
            for entry in manifest['arrays']:
                groups.setdefault(entry['group'], {})[entry['name']] = _decode(
                    blobs[entry['file']], entry['dtype'], entry['shape']
                )
            checkpoint = cls(
                backbone_spec=BackboneSpec.from_dict(manifest['backbone_spec']),
                head_spec=ProjectionHeadSpec.from_dict(manifest['head_spec']),
                teacher=groups['teacher'],
                student=groups.get('student'),
                center=groups.get('center', {}).get('c'),
                step=manifest['step'],
                float_width=manifest['float_width'],
                config=manifest['config'],
                provenance=manifest['provenance'],
                content_hash=recorded,
            )
        except (KeyError, ValueError) as exc:
            raise CheckpointError(f"checkpoint {path} has an inconsistent manifest: {exc}") from exc
        logger.debug("Loaded checkpoint %s (step %d)", path, checkpoint.step)
        return checkpoint


def file_sha256(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, 'rb') as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b''):
            digest.update(chunk)
    return digest.hexdigest()
