"""
Temperature softmax, centering and the cross-view distillation loss.

Centering subtracts the running center from teacher logits before the
softmax. Applying it with a plus sign would add the accumulated mean back
instead of removing it, so only subtraction is supported.
"""
from __future__ import annotations

from typing import Sequence

import torch

from geodistill.exceptions import InvalidArgument

LOG_CLAMP_EPS = 1e-12


def _check_temperature(temperature: float) -> None:
    if not temperature > 0:
        raise InvalidArgument(f"temperature must be positive, got {temperature}")


def teacher_probabilities(logits: torch.Tensor, center: torch.Tensor | float, temperature: float) -> torch.Tensor:
    """Row-wise softmax((logits - center) / temperature)."""
    _check_temperature(temperature)
    return torch.softmax((logits - center) / temperature, dim=-1)


def student_probabilities(logits: torch.Tensor, temperature: float) -> torch.Tensor:
    _check_temperature(temperature)
    return torch.softmax(logits / temperature, dim=-1)


def loss_pairs(num_globals: int, num_views: int) -> list[tuple[int, int]]:
    """(teacher global, student view) index pairs, skipping a view paired with itself."""
    return [(g, v) for g in range(num_globals) for v in range(num_views) if v != g]


def cross_entropy(teacher_probs: torch.Tensor, student_probs: torch.Tensor) -> torch.Tensor:
    """Per-row H(P_t, P_s) with the log clamped at LOG_CLAMP_EPS."""
    return -(teacher_probs * torch.log(student_probs.clamp_min(LOG_CLAMP_EPS))).sum(dim=-1)


def entropy(probs: torch.Tensor) -> torch.Tensor:
    """Per-row Shannon entropy."""
    return cross_entropy(probs, probs)


def distill_loss(teacher_probs: Sequence[torch.Tensor], student_probs: Sequence[torch.Tensor]) -> torch.Tensor:
    """
    Mean cross-entropy over every (teacher global, student view) pair.

    ``teacher_probs`` holds one (B, K) tensor per global view and
    ``student_probs`` one per view, globals first. Teacher rows are detached.
    """
    num_globals, num_views = len(teacher_probs), len(student_probs)
    if num_views < num_globals:
        raise InvalidArgument(f"{num_globals} teacher globals but only {num_views} student views")
    pairs = loss_pairs(num_globals, num_views)
    if not pairs:
        raise InvalidArgument("no (teacher, student) pairs to compare")
    total = 0.0
    for g, v in pairs:
        total = total + cross_entropy(teacher_probs[g].detach(), student_probs[v]).mean()
    return total / len(pairs)


def mean_entropy(probs: Sequence[torch.Tensor]) -> torch.Tensor:
    return entropy(torch.cat([p.detach() for p in probs])).mean()
