"""
Run configuration: TOML files validated by RunConfigSerializer.

Values on the command line (``--seed``, ``--set section.key=value`` ...)
are applied to the parsed document before validation, so they go through
the same field checks as file values.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import tomlkit
from django.conf import settings
from tomlkit.exceptions import ParseError

from geodistill.exceptions import ConfigError

from .serializers import SECTION_SERIALIZERS, RunConfigSerializer


def flatten_errors(errors, prefix: str = '') -> list[str]:
    """Turn nested serializer errors into ``section.key: message`` lines."""
    if isinstance(errors, dict):
        lines = []
        for key, value in errors.items():
            lines.extend(flatten_errors(value, f"{prefix}.{key}" if prefix else str(key)))
        return lines
    if isinstance(errors, list):
        lines = []
        for item in errors:
            lines.extend(flatten_errors(item, prefix))
        return lines
    return [f"{prefix}: {errors}" if prefix else str(errors)]


def parse_value(text: str):
    """Parse a TOML literal; anything that is not one is kept as a string."""
    try:
        return tomlkit.parse(f"value = {text}")['value'].unwrap()
    except ParseError:
        return text


def format_override(section: str, key: str, value) -> str:
    """Render one value as a ``section.key=<TOML literal>`` assignment."""
    return f"{section}.{key}={tomlkit.item(value).as_string()}"


def apply_override(document: dict, assignment: str) -> None:
    if '=' not in assignment:
        raise ConfigError(f"override {assignment!r} must look like section.key=value")
    path, raw = assignment.split('=', 1)
    parts = path.strip().split('.')
    if len(parts) != 2 or not all(parts):
        raise ConfigError(f"override key {path!r} must be section.key")
    section, key = parts
    if section not in SECTION_SERIALIZERS:
        raise ConfigError(f"unknown config section {section!r}", errors={section: ['Unknown key.']})
    document.setdefault(section, {})[key] = parse_value(raw.strip())


@dataclass(frozen=True)
class RunConfig:
    data: dict

    def __getitem__(self, section: str) -> dict:
        return self.data[section]

    @property
    def mode(self) -> str:
        return self.data['run']['mode']

    @property
    def seed(self) -> int:
        return self.data['run']['seed']

    @property
    def output_dir(self) -> Path:
        """Configured output directory; relative paths live under GEODISTILL_OUTPUT_ROOT."""
        raw = self.data['run']['output_dir'] or self.mode
        path = Path(raw).expanduser()
        return path if path.is_absolute() else Path(settings.GEODISTILL_OUTPUT_ROOT) / path

    def snapshot(self) -> dict:
        return copy.deepcopy(self.data)

    def to_toml(self) -> str:
        document = tomlkit.document()
        for section, values in self.data.items():
            table = tomlkit.table()
            for key, value in values.items():
                table.add(key, value)
            document.add(section, table)
        return tomlkit.dumps(document)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_toml(), encoding='utf-8')

    def replace(self, **sections) -> "RunConfig":
        """Return a re-validated copy with some section keys changed."""
        document = self.snapshot()
        for section, values in sections.items():
            document.setdefault(section, {}).update(values)
        return RunConfig.from_mapping(document)

    @classmethod
    def from_mapping(cls, mapping: dict) -> "RunConfig":
        serializer = RunConfigSerializer(data=mapping)
        if not serializer.is_valid():
            lines = flatten_errors(serializer.errors)
            raise ConfigError("invalid run config:\n  " + "\n  ".join(lines), errors=serializer.errors)
        return cls(data=_plain(serializer.validated_data))

    @classmethod
    def from_toml(cls, text: str, overrides: Iterable[str] = (), **flags) -> "RunConfig":
        try:
            document = tomlkit.parse(text).unwrap()
        except ParseError as exc:
            raise ConfigError(f"config is not valid TOML: {exc}") from exc
        for assignment in overrides:
            apply_override(document, assignment)
        for key, value in flags.items():
            if value is not None:
                document.setdefault('run', {})[key] = value
        return cls.from_mapping(document)

    @classmethod
    def load(cls, path: str | Path | None, overrides: Iterable[str] = (), **flags) -> "RunConfig":
        """Read ``path`` (or start from defaults when None) and apply overrides."""
        if path is None:
            return cls.from_toml('', overrides, **flags)
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file {path} does not exist")
        return cls.from_toml(path.read_text(encoding='utf-8'), overrides, **flags)


def _plain(value):
    """Convert validated data (OrderedDicts, tuples) into plain dicts and lists."""
    if isinstance(value, dict):
        return {key: _plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(item) for item in value]
    return value
