"""
Change-detection loss and pixel metrics.
"""
from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from geodistill.exceptions import InvalidArgument

DEFAULT_SMOOTH = 1.0
DEFAULT_THRESHOLD = 0.5


def _check_mask(mask: torch.Tensor) -> None:
    if not bool(((mask == 0) | (mask == 1)).all()):
        raise InvalidArgument("change masks must be binary")


def soft_dice_term(logits: torch.Tensor, mask: torch.Tensor, smooth: float = DEFAULT_SMOOTH) -> torch.Tensor:
    """1 - (2 sum(p t) + eps) / (sum(p) + sum(t) + eps) over every pixel of the batch."""
    probs = torch.sigmoid(logits)
    target = mask.to(logits.dtype)
    overlap = (probs * target).sum()
    return 1 - (2 * overlap + smooth) / (probs.sum() + target.sum() + smooth)


def change_loss(logits: torch.Tensor, mask: torch.Tensor, smooth: float = DEFAULT_SMOOTH) -> torch.Tensor:
    """Mean BCE on logits plus the soft-Dice term."""
    if logits.shape != mask.shape:
        raise InvalidArgument(f"logits {tuple(logits.shape)} and mask {tuple(mask.shape)} differ in shape")
    _check_mask(mask)
    bce = F.binary_cross_entropy_with_logits(logits, mask.to(logits.dtype))
    return bce + soft_dice_term(logits, mask, smooth)


def predict_mask(logits: torch.Tensor, threshold: float = DEFAULT_THRESHOLD) -> torch.Tensor:
    return (torch.sigmoid(logits) > threshold).to(torch.uint8)


@dataclass(frozen=True)
class PixelCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __add__(self, other: "PixelCounts") -> "PixelCounts":
        return PixelCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn)

    @classmethod
    def count(cls, pred_mask: torch.Tensor, true_mask: torch.Tensor) -> "PixelCounts":
        if pred_mask.shape != true_mask.shape:
            raise InvalidArgument(f"predicted {tuple(pred_mask.shape)} and true {tuple(true_mask.shape)} masks differ in shape")
        _check_mask(pred_mask)
        _check_mask(true_mask)
        pred, true = pred_mask.bool(), true_mask.bool()
        return cls(
            tp=int((pred & true).sum()),
            fp=int((pred & ~true).sum()),
            fn=int((~pred & true).sum()),
            tn=int((~pred & ~true).sum()),
        )

    def scores(self) -> tuple[float, float, float]:
        """(precision, recall, F1); a zero denominator gives 0."""
        precision = self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0
        recall = self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        return precision, recall, f1


def pixel_metrics(pred_mask: torch.Tensor, true_mask: torch.Tensor) -> tuple[float, float, float]:
    return PixelCounts.count(pred_mask, true_mask).scores()
