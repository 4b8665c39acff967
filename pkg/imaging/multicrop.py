"""
Multi-crop view sets: a few large global crops plus several smaller local
crops of one image, each carrying the recipe it was augmented with.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import torch

from geodistill.exceptions import InvalidArgument, SizingError

from .planes import ImagePlane
from .transforms import AugmentRecipe, CropPlan, apply_crop_plan, apply_recipe, sample_crop_plan

DEFAULT_LOCAL_SIZES = (184, 164, 144, 124, 104, 84)


@dataclass(frozen=True)
class MultiCropConfig:
    global_size: int = 224
    num_globals: int = 2
    global_scale: tuple[float, float] = (0.32, 1.0)
    local_sizes: tuple[int, ...] = DEFAULT_LOCAL_SIZES
    local_scale: tuple[float, float] = (0.05, 0.32)
    global_recipes: tuple[AugmentRecipe, ...] = field(
        default_factory=lambda: (AugmentRecipe.global_primary(), AugmentRecipe.global_secondary())
    )
    local_recipe: AugmentRecipe = field(default_factory=AugmentRecipe.local)

    def __post_init__(self):
        if self.num_globals < 1:
            raise InvalidArgument(f"num_globals must be >= 1, got {self.num_globals}")
        if not self.global_recipes:
            raise InvalidArgument("at least one global recipe is required")
        if any(size < 1 for size in (self.global_size, *self.local_sizes)):
            raise InvalidArgument("crop sizes must be positive")

    @property
    def num_locals(self) -> int:
        return len(self.local_sizes)

    @property
    def min_output_size(self) -> int:
        return min((self.global_size, *self.local_sizes))

    def global_recipe(self, index: int) -> AugmentRecipe:
        return self.global_recipes[index % len(self.global_recipes)]

    def with_fixed_local_size(self, size: int) -> "MultiCropConfig":
        """Same pipeline with every local crop forced to one size."""
        return MultiCropConfig(
            global_size=self.global_size,
            num_globals=self.num_globals,
            global_scale=self.global_scale,
            local_sizes=(size,) * self.num_locals,
            local_scale=self.local_scale,
            global_recipes=self.global_recipes,
            local_recipe=self.local_recipe,
        )

    @classmethod
    def from_section(cls, augment: dict) -> "MultiCropConfig":
        """Build from a validated ``[augment]`` run-config section."""
        photometric = {
            'jitter_strengths': tuple(augment['jitter_strengths']),
            'jitter_prob': augment['jitter_prob'],
            'blur_sigma_range': tuple(augment['blur_sigma']),
        }
        primary_blur, secondary_blur = augment['global_blur_probs']
        return cls(
            global_size=augment['global_size'],
            num_globals=augment['num_globals'],
            global_scale=tuple(augment['global_scale']),
            local_sizes=tuple(augment['local_sizes']),
            local_scale=tuple(augment['local_scale']),
            global_recipes=(
                AugmentRecipe.global_primary(blur_prob=primary_blur, **photometric),
                AugmentRecipe.global_secondary(blur_prob=secondary_blur, **photometric),
            ),
            local_recipe=AugmentRecipe.local(
                grayscale_prob=augment['grayscale_prob'],
                blur_prob=augment['local_blur_prob'],
                **photometric,
            ),
        )


@dataclass(frozen=True)
class ViewSet:
    """Augmented views of one training instance, globals first."""

    global_views: tuple[ImagePlane, ...]
    local_views: tuple[ImagePlane, ...]
    seed: int
    recipe_tags: tuple[str, ...]
    plans: tuple[CropPlan, ...] = ()
    sources: tuple[int, ...] = ()

    @property
    def views(self) -> tuple[ImagePlane, ...]:
        return self.global_views + self.local_views

    @property
    def num_globals(self) -> int:
        return len(self.global_views)

    @property
    def num_views(self) -> int:
        return len(self.global_views) + len(self.local_views)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(view.height for view in self.views)


def check_source_size(size: tuple[int, int], config: MultiCropConfig) -> None:
    height, width = size
    if min(height, width) < config.min_output_size:
        raise SizingError(
            f"image {width}x{height} is smaller than the smallest crop ({config.min_output_size}px)"
        )


def make_viewset_mc(img: ImagePlane, config: MultiCropConfig, rng: torch.Generator) -> ViewSet:
    """Global crops with their per-index recipes, then one local crop per configured size."""
    check_source_size(img.size, config)
    views: list[ImagePlane] = []
    tags: list[str] = []
    plans: list[CropPlan] = []

    for index in range(config.num_globals):
        recipe = config.global_recipe(index)
        plan = sample_crop_plan(img.size, config.global_scale, config.global_size, rng)
        views.append(apply_recipe(apply_crop_plan(img, plan), recipe, rng))
        tags.append(recipe.branch)
        plans.append(plan)

    for size in config.local_sizes:
        plan = sample_crop_plan(img.size, config.local_scale, size, rng)
        views.append(apply_recipe(apply_crop_plan(img, plan), config.local_recipe, rng))
        tags.append(config.local_recipe.branch)
        plans.append(plan)

    return ViewSet(
        global_views=tuple(views[:config.num_globals]),
        local_views=tuple(views[config.num_globals:]),
        seed=rng.initial_seed(),
        recipe_tags=tuple(tags),
        plans=tuple(plans),
    )
