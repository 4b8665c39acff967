"""
Unit tests for multi-crop view sets.

Tests for:
- make_viewset_mc: sizes, recipe tags, determinism, sizing errors
- MultiCropConfig: fixed-size locals, construction from a config section
"""

from collections import Counter

import pytest
import torch

from django.conf import settings

from geodistill.exceptions import SizingError
from imaging.multicrop import MultiCropConfig, make_viewset_mc
from imaging.planes import ImagePlane
from imaging.transforms import sample_crop_plan


def source_plane(size=256, seed=0):
    generator = torch.Generator().manual_seed(seed)
    return ImagePlane(torch.rand(3, size, size, generator=generator))


# ============================================================================
# VIEWSET TESTS
# ============================================================================

@pytest.mark.unit
class TestMakeViewsetMC:
    """Test suite for make_viewset_mc"""

    def test_default_size_multiset(self):
        """Test default config gives {224 x2, 184, 164, 144, 124, 104, 84}"""
        viewset = make_viewset_mc(source_plane(), MultiCropConfig(), torch.Generator().manual_seed(0))

        assert Counter(viewset.sizes) == Counter([224, 224, 184, 164, 144, 124, 104, 84])
        assert viewset.num_globals == 2
        assert len(viewset.local_views) == 6

    def test_recipe_tags(self):
        """Test both globals are tagged global-recipe and all six locals local-recipe"""
        viewset = make_viewset_mc(source_plane(), MultiCropConfig(), torch.Generator().manual_seed(1))

        assert viewset.recipe_tags == ('global-recipe',) * 2 + ('local-recipe',) * 6

    def test_same_seed_bit_identical(self):
        """Test identical seeds give bit-identical view sets"""
        img = source_plane(seed=3)

        first = make_viewset_mc(img, MultiCropConfig(), torch.Generator().manual_seed(42))
        second = make_viewset_mc(img, MultiCropConfig(), torch.Generator().manual_seed(42))

        assert first.seed == second.seed == 42
        for a, b in zip(first.views, second.views):
            assert torch.equal(a.data, b.data)

    def test_area_fractions_follow_branch_scale(self):
        """Test global plans lie in (0.32, 1) and local plans in (0.05, 0.32)"""
        viewset = make_viewset_mc(source_plane(), MultiCropConfig(), torch.Generator().manual_seed(2))

        for plan in viewset.plans[:2]:
            assert 0.32 <= plan.area_fraction <= 1.0
        for plan in viewset.plans[2:]:
            assert 0.05 <= plan.area_fraction <= 0.32

    def test_image_too_small_rejected(self):
        """Test a source smaller than the smallest crop raises SizingError"""
        with pytest.raises(SizingError):
            make_viewset_mc(source_plane(size=80), MultiCropConfig(), torch.Generator())

    def test_every_view_is_valid(self):
        """Test every view stays finite and within [0, 1]"""
        viewset = make_viewset_mc(source_plane(seed=5), MultiCropConfig(), torch.Generator().manual_seed(5))

        for view in viewset.views:
            assert torch.isfinite(view.data).all()
            assert 0 <= view.data.min() and view.data.max() <= 1

    @pytest.mark.slow
    def test_geometry_over_many_seeds(self):
        """Test 10^4 seeded crop layouts keep size multiset and area fractions"""
        config = MultiCropConfig()
        expected = Counter([224, 224, 184, 164, 144, 124, 104, 84])
        for seed in range(10_000):
            rng = torch.Generator().manual_seed(seed)
            plans = [sample_crop_plan((256, 256), config.global_scale, config.global_size, rng)
                     for _ in range(config.num_globals)]
            plans += [sample_crop_plan((256, 256), config.local_scale, size, rng) for size in config.local_sizes]

            assert Counter(plan.output_size for plan in plans) == expected
            assert all(0.32 <= plan.area_fraction <= 1.0 for plan in plans[:2])
            assert all(0.05 <= plan.area_fraction <= 0.32 for plan in plans[2:])


# ============================================================================
# CONFIG TESTS
# ============================================================================

@pytest.mark.unit
class TestMultiCropConfig:
    """Test suite for MultiCropConfig"""

    def test_fixed_local_size(self):
        """Test baseline locals are six copies of one size"""
        config = MultiCropConfig().with_fixed_local_size(96)

        assert config.local_sizes == (96,) * 6
        assert config.global_size == 224

    def test_fixed_size_equals_explicit_list(self):
        """Test forcing one size matches listing that size six times"""
        img = source_plane(seed=9)
        forced = MultiCropConfig().with_fixed_local_size(96)
        explicit = MultiCropConfig(local_sizes=(96,) * 6)

        first = make_viewset_mc(img, forced, torch.Generator().manual_seed(0))
        second = make_viewset_mc(img, explicit, torch.Generator().manual_seed(0))

        for a, b in zip(first.views, second.views):
            assert torch.equal(a.data, b.data)

    def test_from_default_section(self):
        """Test the default [augment] section reproduces the preset recipes"""
        config = MultiCropConfig.from_section(settings.GEODISTILL_DEFAULTS['augment'])

        assert config.local_sizes == (184, 164, 144, 124, 104, 84)
        assert config.global_recipes[0].blur_prob == 1.0
        assert config.global_recipes[1].blur_prob == 0.1
        assert config.local_recipe.grayscale_prob == 0.2
        assert config.min_output_size == 84
