"""
Architecture specs. Specs are plain frozen dataclasses so they can be
written into a checkpoint manifest and rebuilt later.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields

from geodistill.exceptions import InvalidArgument

RESIDUAL = 'residual'
WIDE_RESIDUAL = 'wide-residual'
PATCH_TRANSFORMER = 'patch-transformer'
FAMILIES = (RESIDUAL, WIDE_RESIDUAL, PATCH_TRANSFORMER)
CONVNET_FAMILIES = (RESIDUAL, WIDE_RESIDUAL)

SKIP_TAPS = ('conv1', 'layer1', 'layer2', 'layer3', 'layer4')
STAGE_STRIDES = (1, 2, 2, 2)
STEM_STRIDE = 2


def _from_mapping(cls, data: dict):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise InvalidArgument(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    values = {key: tuple(value) if isinstance(value, list) else value for key, value in data.items()}
    return cls(**values)


@dataclass(frozen=True)
class BackboneSpec:
    family: str = RESIDUAL
    stage_channels: tuple[int, ...] = (16, 32, 64, 128)
    depth_per_stage: tuple[int, ...] = (2, 2, 2, 2)
    widening_factor: int = 1
    in_channels: int = 3
    patch_size: int = 8
    embed_dim: int = 96
    depth: int = 4
    num_heads: int = 4
    native_size: int = 224
    patch_resize: bool = True

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidArgument(f"unknown backbone family {self.family!r}; choose from {FAMILIES}")
        if self.in_channels < 1:
            raise InvalidArgument("in_channels must be >= 1")
        if self.is_convnet:
            if len(self.stage_channels) != len(STAGE_STRIDES) or len(self.depth_per_stage) != len(STAGE_STRIDES):
                raise InvalidArgument(f"convnets need {len(STAGE_STRIDES)} stages")
            if any(c < 2 for c in self.stage_channels) or any(d < 1 for d in self.depth_per_stage):
                raise InvalidArgument("stage channels must be >= 2 and depths >= 1")
            if self.widening_factor < 1:
                raise InvalidArgument("widening_factor must be a positive integer")
            if self.family == RESIDUAL and self.widening_factor != 1:
                raise InvalidArgument("the residual family has widening_factor 1; use wide-residual")
        else:
            if self.patch_size < 1 or self.depth < 1:
                raise InvalidArgument("patch_size and depth must be >= 1")
            if self.embed_dim % self.num_heads:
                raise InvalidArgument(f"embed_dim {self.embed_dim} is not divisible by num_heads {self.num_heads}")
            if self.native_size % self.patch_size:
                raise InvalidArgument("native_size must be a multiple of patch_size")

    @property
    def is_convnet(self) -> bool:
        return self.family in CONVNET_FAMILIES

    @property
    def feature_dim(self) -> int:
        return self.stage_channels[-1] if self.is_convnet else self.embed_dim

    @property
    def skip_taps(self) -> tuple[str, ...]:
        return SKIP_TAPS if self.is_convnet else ()

    @property
    def tap_channels(self) -> tuple[int, ...]:
        """Channel count at each skip tap: the stem matches the first stage."""
        return (self.stage_channels[0], *self.stage_channels)

    @property
    def bottleneck_channels(self) -> tuple[int, ...]:
        return tuple(c // 2 * self.widening_factor for c in self.stage_channels)

    @property
    def total_stride(self) -> int:
        if not self.is_convnet:
            return self.patch_size
        stride = STEM_STRIDE
        for s in STAGE_STRIDES:
            stride *= s
        return stride

    def to_dict(self) -> dict:
        data = asdict(self)
        return {key: list(value) if isinstance(value, tuple) else value for key, value in data.items()}

    @classmethod
    def from_dict(cls, data: dict) -> "BackboneSpec":
        return _from_mapping(cls, data)


@dataclass(frozen=True)
class ProjectionHeadSpec:
    hidden_dim: int = 512
    bottleneck_dim: int = 64
    num_prototypes: int = 1024
    num_layers: int = 3

    def __post_init__(self):
        if self.num_prototypes < 2:
            raise InvalidArgument(f"num_prototypes must be >= 2, got {self.num_prototypes}")
        if self.num_layers < 1 or self.hidden_dim < 1 or self.bottleneck_dim < 1:
            raise InvalidArgument("head dimensions and layer count must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ProjectionHeadSpec":
        return _from_mapping(cls, data)
