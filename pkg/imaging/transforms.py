"""
Seeded augmentation ops.

Every op takes the ``torch.Generator`` it may draw from and nothing else
random, so (input, arguments, generator state) fully determines the output.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F
import torchvision.transforms.functional as TF

from geodistill.exceptions import InvalidArgument

from .planes import ImagePlane


ASPECT_RATIO_RANGE = (3.0 / 4.0, 4.0 / 3.0)
CROP_ATTEMPTS = 10
LUMINANCE_WEIGHTS = (0.299, 0.587, 0.114)
GLOBAL_BRANCH = 'global-recipe'
LOCAL_BRANCH = 'local-recipe'
TEMPORAL_BRANCH = 'temporal-recipe'


def uniform(rng: torch.Generator, lo: float, hi: float) -> float:
    """One draw from U[lo, hi) in double precision."""
    return lo + (hi - lo) * torch.rand((), generator=rng, dtype=torch.float64).item()


def randint(rng: torch.Generator, lo: int, hi: int) -> int:
    """One integer draw from [lo, hi] inclusive."""
    return int(torch.randint(lo, hi + 1, (1,), generator=rng).item())


def _check_scale_range(scale_range) -> tuple[float, float]:
    lo, hi = (float(v) for v in scale_range)
    if lo == 0 and hi == 0:
        raise InvalidArgument("degenerate scale range (0, 0)")
    if not 0 <= lo <= hi <= 1:
        raise InvalidArgument(f"scale range must satisfy 0 <= lo <= hi <= 1, got ({lo}, {hi})")
    return lo, hi


def _check_probability(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise InvalidArgument(f"{name} must lie in [0, 1], got {value}")


# ============================================================================
# CROPS
# ============================================================================

@dataclass(frozen=True)
class CropPlan:
    """A source region (x, y, w, h) and the square size it is resampled to."""

    region: tuple[int, int, int, int]
    output_size: int
    scale_range: tuple[float, float]
    source_size: tuple[int, int]

    def __post_init__(self):
        x, y, w, h = self.region
        height, width = self.source_size
        if w < 1 or h < 1 or x < 0 or y < 0 or x + w > width or y + h > height:
            raise InvalidArgument(f"crop region {self.region} is outside a {width}x{height} source")
        if self.output_size < 1:
            raise InvalidArgument(f"output size must be >= 1, got {self.output_size}")
        lo, hi = self.scale_range
        if not lo <= self.area_fraction <= hi:
            raise InvalidArgument(
                f"crop area fraction {self.area_fraction:.4f} is outside the scale range ({lo}, {hi})"
            )

    @property
    def area_fraction(self) -> float:
        _, _, w, h = self.region
        height, width = self.source_size
        return (w * h) / (width * height)


def _fallback_extent(height: int, width: int, lo: float, hi: float) -> tuple[int, int]:
    """Smallest-aspect-distortion (w, h) whose area fraction lies in [lo, hi]."""
    area = height * width
    target = math.sqrt((lo + hi) / 2.0)
    preferred_w = min(width, max(1, round(width * target)))
    candidates = sorted(range(1, width + 1), key=lambda w: (abs(w - preferred_w), w))
    for w in candidates:
        h_lo = max(1, math.ceil(lo * area / w - 1e-9))
        h_hi = min(height, math.floor(hi * area / w + 1e-9))
        if h_lo > h_hi:
            continue
        h = min(h_hi, max(h_lo, round(height * target)))
        if lo <= (w * h) / area <= hi:
            return w, h
    raise InvalidArgument(f"no crop of a {width}x{height} source has an area fraction in ({lo}, {hi})")


def sample_crop_plan(
    source_size: tuple[int, int],
    scale_range: tuple[float, float],
    output_size: int,
    rng: torch.Generator,
) -> CropPlan:
    """
    Sample a crop region whose area fraction lies in ``scale_range``.

    Aspect ratio is drawn log-uniformly from [3/4, 4/3]. Regions that do not
    fit or whose integer area misses the range are redrawn; after
    CROP_ATTEMPTS misses a centered region satisfying the range is used.
    """
    height, width = source_size
    lo, hi = _check_scale_range(scale_range)
    area = height * width
    if lo * area < 1:
        raise InvalidArgument(f"scale {lo} of a {width}x{height} source is smaller than one pixel")

    log_lo, log_hi = (math.log(r) for r in ASPECT_RATIO_RANGE)
    for _ in range(CROP_ATTEMPTS):
        target_area = area * uniform(rng, lo, hi)
        aspect = math.exp(uniform(rng, log_lo, log_hi))
        w = int(round(math.sqrt(target_area * aspect)))
        h = int(round(math.sqrt(target_area / aspect)))
        if 0 < w <= width and 0 < h <= height and lo <= (w * h) / area <= hi:
            x = randint(rng, 0, width - w)
            y = randint(rng, 0, height - h)
            return CropPlan((x, y, w, h), output_size, (lo, hi), (height, width))

    w, h = _fallback_extent(height, width, lo, hi)
    x, y = (width - w) // 2, (height - h) // 2
    return CropPlan((x, y, w, h), output_size, (lo, hi), (height, width))


def apply_crop_plan(img: ImagePlane, plan: CropPlan) -> ImagePlane:
    """Cut the planned region and resample it bilinearly to the output size."""
    if plan.source_size != img.size:
        raise InvalidArgument(f"crop plan was drawn for {plan.source_size}, image is {img.size}")
    x, y, w, h = plan.region
    region = img.data[:, y:y + h, x:x + w]
    if (h, w) == (plan.output_size, plan.output_size):
        return ImagePlane(region.clone())
    resized = F.interpolate(
        region.unsqueeze(0),
        size=(plan.output_size, plan.output_size),
        mode='bilinear',
        align_corners=False,
    )
    return ImagePlane(resized.squeeze(0).clamp(0.0, 1.0))


def random_resized_crop(
    img: ImagePlane,
    scale_range: tuple[float, float],
    output_size: int,
    rng: torch.Generator,
) -> ImagePlane:
    plan = sample_crop_plan(img.size, scale_range, output_size, rng)
    return apply_crop_plan(img, plan)


# ============================================================================
# PHOTOMETRIC OPS
# ============================================================================

def color_jitter(img: ImagePlane, strengths, rng: torch.Generator) -> ImagePlane:
    """
    Brightness, contrast, saturation and hue adjustment in random order.

    Factors are drawn from [max(0, 1 - s), 1 + s] for the first three and a
    hue shift from [-s, s] (clamped to half a turn). Adjustments with zero
    strength are skipped and draw nothing.
    """
    brightness, contrast, saturation, hue = (float(s) for s in strengths)
    for name, value in zip(('brightness', 'contrast', 'saturation', 'hue'), (brightness, contrast, saturation, hue)):
        _check_probability(f"{name} strength", value)
    if (saturation or hue) and img.channels != 3:
        raise InvalidArgument(f"saturation/hue jitter needs 3 channels, image has {img.channels}")
    if img.channels not in (1, 3) and contrast:
        raise InvalidArgument(f"contrast jitter needs 1 or 3 channels, image has {img.channels}")

    order = torch.randperm(4, generator=rng).tolist()
    data = img.data
    for index in order:
        if index == 0 and brightness > 0:
            data = TF.adjust_brightness(data, uniform(rng, max(0.0, 1 - brightness), 1 + brightness))
        elif index == 1 and contrast > 0:
            data = TF.adjust_contrast(data, uniform(rng, max(0.0, 1 - contrast), 1 + contrast))
        elif index == 2 and saturation > 0:
            data = TF.adjust_saturation(data, uniform(rng, max(0.0, 1 - saturation), 1 + saturation))
        elif index == 3 and hue > 0:
            shift = min(0.5, hue)
            data = TF.adjust_hue(data, uniform(rng, -shift, shift))
    if data is img.data:
        return img
    return ImagePlane(data.clamp(0.0, 1.0))


def luminance(data: torch.Tensor) -> torch.Tensor:
    r, g, b = data[0], data[1], data[2]
    wr, wg, wb = LUMINANCE_WEIGHTS
    return wr * r + wg * g + wb * b


def to_grayscale(img: ImagePlane, prob: float, rng: torch.Generator) -> ImagePlane:
    """With probability ``prob`` replace every channel by the BT.601 luminance."""
    if img.channels != 3:
        raise InvalidArgument(f"grayscale conversion needs 3 channels, image has {img.channels}")
    _check_probability("grayscale probability", prob)
    if uniform(rng, 0.0, 1.0) >= prob:
        return img
    gray = luminance(img.data).clamp(0.0, 1.0)
    return ImagePlane(gray.unsqueeze(0).expand(3, -1, -1).contiguous())


def gaussian_kernel1d(sigma: float) -> torch.Tensor:
    """Normalized float64 Gaussian taps with radius ceil(3 sigma)."""
    if sigma <= 0:
        raise InvalidArgument(f"sigma must be positive, got {sigma}")
    radius = math.ceil(3 * sigma)
    offsets = torch.arange(-radius, radius + 1, dtype=torch.float64)
    kernel = torch.exp(-0.5 * (offsets / sigma) ** 2)
    return kernel / kernel.sum()


def gaussian_blur(img: ImagePlane, sigma, rng: torch.Generator) -> ImagePlane:
    """
    Separable Gaussian blur with reflect padding.

    ``sigma`` is either a positive number or a (lo, hi) range sampled
    uniformly from ``rng``.
    """
    if isinstance(sigma, (tuple, list)):
        lo, hi = (float(v) for v in sigma)
        if not 0 < lo <= hi:
            raise InvalidArgument(f"sigma range must be positive and ordered, got ({lo}, {hi})")
        sigma = uniform(rng, lo, hi)
    sigma = float(sigma)
    kernel = gaussian_kernel1d(sigma)
    radius = (kernel.numel() - 1) // 2
    if radius >= min(img.height, img.width):
        raise InvalidArgument(
            f"blur radius {radius} needs an image larger than {img.width}x{img.height} for reflect padding"
        )

    channels = img.channels
    source = img.data.to(torch.float64).unsqueeze(0)
    padded = F.pad(source, (radius, radius, radius, radius), mode='reflect')
    horizontal = kernel.view(1, 1, 1, -1).expand(channels, 1, 1, -1)
    vertical = kernel.view(1, 1, -1, 1).expand(channels, 1, -1, 1)
    blurred = F.conv2d(padded, horizontal, groups=channels)
    blurred = F.conv2d(blurred, vertical, groups=channels)
    return ImagePlane(blurred.squeeze(0).clamp(0.0, 1.0).to(img.data.dtype))


# ============================================================================
# RECIPES
# ============================================================================

@dataclass(frozen=True)
class AugmentRecipe:
    """
    Photometric pipeline for one branch: jitter, then grayscale, then blur.

    ``name`` identifies the preset; ``branch`` is the tag a view carries.
    """

    name: str
    jitter_strengths: tuple[float, float, float, float] = (0.4, 0.4, 0.2, 0.1)
    jitter_prob: float = 0.8
    grayscale_prob: float = 0.0
    blur_prob: float = 0.5
    blur_sigma_range: tuple[float, float] = (0.1, 2.0)
    branch: str = GLOBAL_BRANCH

    def __post_init__(self):
        if len(self.jitter_strengths) != 4:
            raise InvalidArgument("jitter_strengths needs (brightness, contrast, saturation, hue)")
        for strength in self.jitter_strengths:
            _check_probability("jitter strength", strength)
        _check_probability("jitter_prob", self.jitter_prob)
        _check_probability("grayscale_prob", self.grayscale_prob)
        _check_probability("blur_prob", self.blur_prob)
        lo, hi = self.blur_sigma_range
        if not 0 < lo <= hi:
            raise InvalidArgument(f"blur sigma range must be positive and ordered, got ({lo}, {hi})")

    @classmethod
    def global_primary(cls, **overrides) -> "AugmentRecipe":
        return cls(name='global_primary', **{'blur_prob': 1.0, **overrides})

    @classmethod
    def global_secondary(cls, **overrides) -> "AugmentRecipe":
        return cls(name='global_secondary', **{'blur_prob': 0.1, **overrides})

    @classmethod
    def local(cls, **overrides) -> "AugmentRecipe":
        return cls(name='local', **{'branch': LOCAL_BRANCH, 'grayscale_prob': 0.2, 'blur_prob': 0.5, **overrides})

    @classmethod
    def temporal(cls, **overrides) -> "AugmentRecipe":
        """Single recipe applied to every selected temporal view."""
        return cls(name='temporal', **{'branch': TEMPORAL_BRANCH, 'grayscale_prob': 0.2, 'blur_prob': 0.5, **overrides})


def channel_safe_strengths(strengths, channels: int) -> tuple[float, float, float, float]:
    """Drop the adjustments torchvision cannot apply to a non-RGB image."""
    brightness, contrast, saturation, hue = strengths
    if channels == 3:
        return brightness, contrast, saturation, hue
    return brightness, contrast if channels == 1 else 0.0, 0.0, 0.0


def apply_recipe(img: ImagePlane, recipe: AugmentRecipe, rng: torch.Generator) -> ImagePlane:
    if uniform(rng, 0.0, 1.0) < recipe.jitter_prob:
        img = color_jitter(img, channel_safe_strengths(recipe.jitter_strengths, img.channels), rng)
    if recipe.grayscale_prob > 0 and img.channels == 3:
        img = to_grayscale(img, recipe.grayscale_prob, rng)
    if uniform(rng, 0.0, 1.0) < recipe.blur_prob:
        img = gaussian_blur(img, recipe.blur_sigma_range, rng)
    return img
