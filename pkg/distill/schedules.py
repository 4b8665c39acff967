"""
Momentum-teacher, center and per-iteration hyper-parameter schedules.

The teacher follows theta_t <- lambda * theta_t + (1 - lambda) * theta_s with
lambda rising from ``base`` to 1 on a cosine.
"""
from __future__ import annotations

import math
from typing import Iterable, Sequence, Union

import numpy as np
import torch
from torch import nn

from geodistill.exceptions import InvalidArgument, InvalidState

MOMENTUM_BASE = 0.996

Parameters = Union[nn.Module, Iterable[torch.Tensor]]


def lambda_at(step: int, total_steps: int, base: float = MOMENTUM_BASE) -> float:
    """Teacher momentum at ``step``: ``base`` at 0, 1 at ``total_steps``."""
    if total_steps < 1:
        raise InvalidArgument(f"total_steps must be >= 1, got {total_steps}")
    if not 0 <= step <= total_steps:
        raise InvalidArgument(f"step {step} is outside [0, {total_steps}]")
    return 1.0 - (1.0 - base) * (math.cos(math.pi * step / total_steps) + 1.0) / 2.0


def _parameters(params: Parameters) -> list[torch.Tensor]:
    if isinstance(params, nn.Module):
        return list(params.parameters())
    return list(params)


@torch.no_grad()
def ema_update(teacher: Parameters, student: Parameters, lam: float) -> None:
    """In-place teacher update from the student; the student is only read."""
    if not 0.0 <= lam <= 1.0:
        raise InvalidArgument(f"lambda must lie in [0, 1], got {lam}")
    teacher_params, student_params = _parameters(teacher), _parameters(student)
    if len(teacher_params) != len(student_params):
        raise InvalidState(f"teacher has {len(teacher_params)} tensors, student has {len(student_params)}")
    for t, s in zip(teacher_params, student_params):
        if t.shape != s.shape:
            raise InvalidState(f"teacher/student shape mismatch: {tuple(t.shape)} vs {tuple(s.shape)}")
    for t, s in zip(teacher_params, student_params):
        t.mul_(lam).add_(s.detach(), alpha=1.0 - lam)


@torch.no_grad()
def center_update(
    center: torch.Tensor, teacher_logits: torch.Tensor | Sequence[torch.Tensor], momentum: float
) -> torch.Tensor:
    """m * c + (1 - m) * (mean teacher logit row)."""
    if not 0.0 <= momentum <= 1.0:
        raise InvalidArgument(f"center momentum must lie in [0, 1], got {momentum}")
    if not isinstance(teacher_logits, torch.Tensor):
        teacher_logits = torch.cat(list(teacher_logits)) if len(teacher_logits) else torch.empty(0)
    if teacher_logits.dim() != 2 or teacher_logits.shape[0] == 0:
        raise InvalidArgument("center update needs a non-empty (B, K) batch of teacher logits")
    batch_center = teacher_logits.detach().mean(dim=0)
    return center * momentum + batch_center * (1.0 - momentum)


def cosine_schedule(
    base_value: float,
    final_value: float,
    epochs: int,
    iters_per_epoch: int,
    warmup_epochs: int = 0,
    start_warmup_value: float = 0.0,
) -> np.ndarray:
    """Per-iteration values: linear warmup, then cosine decay from base to final."""
    warmup_iters = min(warmup_epochs, epochs) * iters_per_epoch
    warmup = np.linspace(start_warmup_value, base_value, warmup_iters) if warmup_iters else np.array([])
    decay_iters = epochs * iters_per_epoch - warmup_iters
    steps = np.arange(decay_iters)
    decay = final_value + 0.5 * (base_value - final_value) * (1 + np.cos(np.pi * steps / max(decay_iters, 1)))
    schedule = np.concatenate((warmup, decay))
    assert len(schedule) == epochs * iters_per_epoch
    return schedule


def teacher_temperature_schedule(
    warmup_temperature: float, temperature: float, warmup_epochs: int, epochs: int
) -> np.ndarray:
    """Per-epoch teacher temperature: linear warmup, then constant; a warmup longer than the run is cut off."""
    warmup = np.linspace(warmup_temperature, temperature, warmup_epochs) if warmup_epochs else np.array([])
    return np.concatenate((warmup, np.full(max(epochs - warmup_epochs, 0), temperature)))[:epochs]
