"""
The single-writer training step.

The teacher sees only global views; the student sees every view, one
backbone pass per run of equal-sized consecutive views. After the student
step the teacher moves toward the student and the center toward the mean
teacher logit.
"""
from __future__ import annotations

import copy
import logging
import math
from dataclasses import dataclass
from typing import Sequence

import torch
from torch import nn

from backbones.networks import DistillNetwork
from backbones.specs import BackboneSpec, ProjectionHeadSpec
from geodistill.exceptions import InvalidArgument, InvalidState, NonFiniteLossError
from imaging.multicrop import ViewSet

from .losses import distill_loss, loss_pairs, mean_entropy, student_probabilities, teacher_probabilities
from .schedules import MOMENTUM_BASE, center_update, ema_update, lambda_at

logger = logging.getLogger(__name__)


@dataclass
class ViewBatch:
    """Per-view tensors of shape (B, C, S, S), globals first."""

    views: tuple[torch.Tensor, ...]
    num_globals: int
    seeds: tuple[int, ...] = ()

    @property
    def num_views(self) -> int:
        return len(self.views)

    @property
    def batch_size(self) -> int:
        return int(self.views[0].shape[0])

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(int(v.shape[-1]) for v in self.views)

    def to(self, device, dtype) -> "ViewBatch":
        return ViewBatch(tuple(v.to(device=device, dtype=dtype) for v in self.views), self.num_globals, self.seeds)


def collate_viewsets(viewsets: Sequence[ViewSet]) -> ViewBatch:
    """Stack view i of every instance into one tensor."""
    if not viewsets:
        raise InvalidArgument("cannot collate an empty batch")
    layout = (viewsets[0].num_globals, viewsets[0].sizes)
    for viewset in viewsets[1:]:
        if (viewset.num_globals, viewset.sizes) != layout:
            raise InvalidArgument("view sets in one batch must share their view layout")
    views = tuple(
        torch.stack([viewset.views[i].data for viewset in viewsets]) for i in range(viewsets[0].num_views)
    )
    return ViewBatch(views, layout[0], tuple(viewset.seed for viewset in viewsets))


@dataclass
class ViewLogits:
    """Prototype logits per view; the teacher only has entries for the globals."""

    teacher: tuple[torch.Tensor, ...]
    student: tuple[torch.Tensor, ...]
    view_ids: tuple[int, ...]

    def __post_init__(self):
        if len(self.teacher) > len(self.student):
            raise InvalidState("teacher logits exist only for global views")


@dataclass
class StepResult:
    loss: float
    teacher_entropy: float
    pairs: int
    lam: float


@dataclass
class DistillState:
    student: DistillNetwork
    teacher: DistillNetwork
    center: torch.Tensor
    total_steps: int
    step: int = 0
    student_temp: float = 0.1
    teacher_temp: float = 0.04
    center_momentum: float = 0.9
    momentum_base: float = MOMENTUM_BASE
    centering: bool = True
    clip_grad: float | None = 3.0
    freeze_last_layer: bool = False

    @classmethod
    def create(
        cls,
        backbone_spec: BackboneSpec,
        head_spec: ProjectionHeadSpec,
        total_steps: int,
        dtype: torch.dtype = torch.float32,
        device: str | torch.device = 'cpu',
        **options,
    ) -> "DistillState":
        """Student from fresh weights; the teacher starts as an exact copy."""
        student = DistillNetwork(backbone_spec, head_spec).to(device=device, dtype=dtype)
        teacher = copy.deepcopy(student)
        for p in teacher.parameters():
            p.requires_grad_(False)
        center = torch.zeros(head_spec.num_prototypes, device=device, dtype=dtype)
        state = cls(student=student, teacher=teacher, center=center, total_steps=total_steps, **options)
        state.check_invariants()
        return state

    @property
    def num_prototypes(self) -> int:
        return self.student.head_spec.num_prototypes

    def current_lambda(self) -> float:
        return lambda_at(min(self.step, self.total_steps), self.total_steps, self.momentum_base)

    def check_invariants(self) -> None:
        student_shapes = [p.shape for p in self.student.parameters()]
        teacher_shapes = [p.shape for p in self.teacher.parameters()]
        if student_shapes != teacher_shapes:
            raise InvalidState("student and teacher parameter shapes diverged")
        if self.center.shape != (self.num_prototypes,):
            raise InvalidState(f"center has shape {tuple(self.center.shape)}, expected ({self.num_prototypes},)")
        if not bool(torch.isfinite(self.center).all()):
            raise InvalidState("center contains non-finite values")

    def snapshot(self, **extra) -> dict:
        """Diagnostics captured when a step has to abort."""
        return {
            'step': self.step,
            'total_steps': self.total_steps,
            'teacher_temp': self.teacher_temp,
            'student_temp': self.student_temp,
            'center_norm': float(self.center.norm()),
            'center_finite': bool(torch.isfinite(self.center).all()),
            'student_finite': all(bool(torch.isfinite(p).all()) for p in self.student.parameters()),
            **extra,
        }


def resolution_groups(sizes: Sequence[int]) -> list[tuple[int, int]]:
    """[start, end) index ranges of consecutive views sharing one size."""
    groups, start = [], 0
    for i in range(1, len(sizes) + 1):
        if i == len(sizes) or sizes[i] != sizes[start]:
            groups.append((start, i))
            start = i
    return groups


def forward_views(state: DistillState, batch: ViewBatch) -> ViewLogits:
    B = batch.batch_size
    with torch.no_grad():
        teacher_out = state.teacher(torch.cat(batch.views[:batch.num_globals]))
    teacher = teacher_out.split(B)

    features = []
    for start, end in resolution_groups(batch.sizes):
        features.append(state.student.backbone(torch.cat(batch.views[start:end])))
    student = state.student.head(torch.cat(features)).split(B)
    return ViewLogits(teacher=tuple(teacher), student=tuple(student), view_ids=tuple(range(batch.num_views)))


def cancel_last_layer_gradients(network: DistillNetwork) -> None:
    for p in network.head.prototypes.parameters():
        p.grad = None


def train_step(state: DistillState, batch: ViewBatch, optimizer: torch.optim.Optimizer) -> StepResult:
    logits = forward_views(state, batch)
    teacher_probs = [teacher_probabilities(t, state.center, state.teacher_temp) for t in logits.teacher]
    student_probs = [student_probabilities(s, state.student_temp) for s in logits.student]
    loss = distill_loss(teacher_probs, student_probs)

    if not math.isfinite(loss.item()):
        snapshot = state.snapshot(loss=loss.item(), lr=[g['lr'] for g in optimizer.param_groups], seeds=list(batch.seeds))
        logger.error("Non-finite loss at step %d: %s", state.step, snapshot)
        raise NonFiniteLossError(f"loss became {loss.item()} at step {state.step}", snapshot)

    optimizer.zero_grad(set_to_none=True)
    loss.backward()
    if state.clip_grad:
        nn.utils.clip_grad_norm_(state.student.parameters(), state.clip_grad)
    if state.freeze_last_layer:
        cancel_last_layer_gradients(state.student)
    optimizer.step()

    lam = state.current_lambda()
    ema_update(state.teacher, state.student, lam)
    if state.centering:
        state.center = center_update(state.center, torch.cat(logits.teacher), state.center_momentum)
    state.step += 1

    return StepResult(
        loss=loss.item(),
        teacher_entropy=mean_entropy(teacher_probs).item(),
        pairs=len(loss_pairs(batch.num_globals, batch.num_views)),
        lam=lam,
    )
