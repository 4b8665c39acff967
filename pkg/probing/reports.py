"""Evaluation reports: a metric map plus the provenance needed to reproduce it."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

from geodistill.exceptions import InvalidArgument

PROTOCOLS = ('knn', 'linear', 'finetune-single', 'finetune-multi', 'changedet')
REPORT_NAME = 'report.json'


@dataclass(frozen=True)
class EvalReport:
    protocol: str
    metrics: dict[str, float]
    dataset_id: str
    split_sizes: dict[str, int]
    seed: int
    checkpoint_hash: str = ''
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise InvalidArgument(f"unknown protocol {self.protocol!r}")
        for name, value in self.metrics.items():
            if not (math.isfinite(value) and 0.0 <= value <= 1.0):
                raise InvalidArgument(f"metric {name} = {value} lies outside [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json() + '\n', encoding='utf-8')
        return path
