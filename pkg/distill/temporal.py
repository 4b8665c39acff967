"""
Temporal-positive view sets.

Three distinct acquisitions of one location are drawn from a stack. Each
is photometrically augmented and cropped once at global size; the first
one drawn also supplies the multi-sized local crops.
"""
from __future__ import annotations

from typing import Sequence

import torch

from geodistill.exceptions import InvalidArgument
from imaging.multicrop import MultiCropConfig, ViewSet, check_source_size
from imaging.planes import ImagePlane
from imaging.transforms import AugmentRecipe, CropPlan, apply_crop_plan, apply_recipe, sample_crop_plan

NUM_TEMPORAL_VIEWS = 3


def make_viewset_tp(
    stack: Sequence[ImagePlane],
    config: MultiCropConfig,
    rng: torch.Generator,
    temporal_recipe: AugmentRecipe | None = None,
) -> ViewSet:
    if len(stack) < NUM_TEMPORAL_VIEWS:
        raise InvalidArgument(f"temporal stacks need at least {NUM_TEMPORAL_VIEWS} views, got {len(stack)}")
    sizes = {(view.channels, *view.size) for view in stack}
    if len(sizes) > 1:
        raise InvalidArgument(f"temporal stack views differ in shape: {sorted(sizes)}")
    check_source_size(stack[0].size, config)
    recipe = temporal_recipe or AugmentRecipe.temporal(
        jitter_strengths=config.local_recipe.jitter_strengths,
        jitter_prob=config.local_recipe.jitter_prob,
        grayscale_prob=config.local_recipe.grayscale_prob,
        blur_prob=config.local_recipe.blur_prob,
        blur_sigma_range=config.local_recipe.blur_sigma_range,
    )

    selected = torch.randperm(len(stack), generator=rng)[:NUM_TEMPORAL_VIEWS].tolist()
    global_views: list[ImagePlane] = []
    plans: list[CropPlan] = []
    for index in selected:
        augmented = apply_recipe(stack[index], recipe, rng)
        plan = sample_crop_plan(augmented.size, config.global_scale, config.global_size, rng)
        global_views.append(apply_crop_plan(augmented, plan))
        plans.append(plan)

    anchor = stack[selected[0]]
    local_views: list[ImagePlane] = []
    for size in config.local_sizes:
        plan = sample_crop_plan(anchor.size, config.local_scale, size, rng)
        local_views.append(apply_recipe(apply_crop_plan(anchor, plan), config.local_recipe, rng))
        plans.append(plan)

    return ViewSet(
        global_views=tuple(global_views),
        local_views=tuple(local_views),
        seed=rng.initial_seed(),
        recipe_tags=(recipe.branch,) * NUM_TEMPORAL_VIEWS + (config.local_recipe.branch,) * len(local_views),
        plans=tuple(plans),
        sources=tuple(selected),
    )
