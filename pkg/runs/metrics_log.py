"""
Step-indexed metrics log: one JSON object per line, keys sorted, no
wall-clock fields, so identical runs write identical files.
"""
from __future__ import annotations

import json
from pathlib import Path

METRICS_NAME = 'metrics.jsonl'


class MetricsLog:
    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text('', encoding='utf-8')

    def write(self, **record) -> None:
        with self.path.open('a', encoding='utf-8') as handle:
            handle.write(json.dumps(record, sort_keys=True) + '\n')


def read_metrics(path: str | Path) -> list[dict]:
    path = Path(path)
    if not path.is_file():
        return []
    with path.open(encoding='utf-8') as handle:
        return [json.loads(line) for line in handle if line.strip()]
