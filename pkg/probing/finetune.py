"""
End-to-end fine-tuning of the teacher backbone with one linear classifier.

Single-label runs use SGD without weight decay and a cosine-annealed
learning rate; multi-label runs use Adam or AdamW with default
hyper-parameters and a learning rate divided by ten at 60% and 80% of
the epochs.
"""
from __future__ import annotations

import logging
import math
from decimal import Decimal
from pathlib import Path

import torch
import torch.nn.functional as F
from torch import nn

from geodistill.exceptions import ConfigError, NonFiniteLossError
from runs.checkpoints import Checkpoint
from runs.ingest import DatasetHandle
from runs.metrics_log import METRICS_NAME, MetricsLog

from .data import is_multilabel, labelled_loader
from .metrics import classification_metrics, mean_average_precision, multilabel_loss
from .reports import EvalReport

logger = logging.getLogger(__name__)

MULTILABEL_OPTIMIZERS = {'adam': torch.optim.Adam, 'adamw': torch.optim.AdamW}


class Classifier(nn.Module):
    def __init__(self, backbone: nn.Module, num_outputs: int):
        super().__init__()
        self.backbone = backbone
        self.fc = nn.Linear(backbone.spec.feature_dim, num_outputs)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc(self.backbone(x))


def multilabel_lr_at(epoch: int, epochs: int, base_lr: float) -> float:
    """``base_lr`` before 60% of the epochs, /10 until 80%, /100 after."""
    first, second = -(-3 * epochs // 5), -(-4 * epochs // 5)
    drops = int(epoch >= first) + int(epoch >= second)
    return float(Decimal(repr(base_lr)).scaleb(-drops))


def build_classifier(checkpoint: Checkpoint, num_outputs: int, freeze_backbone: bool, device) -> Classifier:
    model = Classifier(checkpoint.teacher_backbone(), num_outputs).to(device=device, dtype=checkpoint.dtype)
    for p in model.backbone.parameters():
        p.requires_grad_(not freeze_backbone)
    return model


def set_train_mode(model: Classifier, freeze_backbone: bool) -> None:
    model.train()
    if freeze_backbone:
        model.backbone.eval()


@torch.no_grad()
def predict(model: Classifier, loader, device) -> tuple[torch.Tensor, torch.Tensor]:
    model.eval()
    dtype = next(model.parameters()).dtype
    scores, targets = [], []
    for images, batch_targets in loader:
        scores.append(model(images.to(device=device, dtype=dtype)).cpu())
        targets.append(batch_targets)
    return torch.cat(scores), torch.cat(targets)


def _splits(dataset: DatasetHandle, train_fraction: float, seed: int) -> tuple[DatasetHandle, DatasetHandle]:
    missing = {'train', 'test'} - set(dataset.splits)
    if missing:
        raise ConfigError(f"fine-tuning needs train and test splits; missing {sorted(missing)}")
    return dataset.split('train').fraction(train_fraction, seed), dataset.split('test')


def _fit(model, loader, optimizer, epochs, loss_fn, lr_at, freeze_backbone, metrics, device) -> list[float]:
    dtype = next(model.parameters()).dtype
    epoch_losses = []
    for epoch in range(epochs):
        lr = lr_at(epoch)
        for group in optimizer.param_groups:
            group['lr'] = lr
        set_train_mode(model, freeze_backbone)
        losses = []
        for images, targets in loader:
            loss = loss_fn(model(images.to(device=device, dtype=dtype)), targets.to(device))
            if not math.isfinite(loss.item()):
                raise NonFiniteLossError(f"fine-tuning loss became {loss.item()} in epoch {epoch}", {'epoch': epoch, 'lr': lr})
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            losses.append(loss.item())
        epoch_losses.append(sum(losses) / len(losses))
        if metrics is not None:
            metrics.write(epoch=epoch, lr=lr, loss=epoch_losses[-1])
        logger.info("fine-tune epoch %d/%d loss %.4f lr %.2e", epoch + 1, epochs, epoch_losses[-1], lr)
    return epoch_losses


def finetune_single(
    checkpoint: Checkpoint,
    dataset: DatasetHandle,
    config: dict,
    seed: int = 0,
    image_size: int = 0,
    device: str | torch.device = 'cpu',
    output_dir: str | Path | None = None,
) -> EvalReport:
    """Train backbone + linear layer on class labels; report test (and train) top-1."""
    if is_multilabel(dataset):
        raise ConfigError("finetune task 'single' needs a single-label dataset")
    torch.manual_seed(seed)
    train, test = _splits(dataset, config['train_fraction'], seed)
    channels = checkpoint.backbone_spec.in_channels
    num_classes = dataset.num_classes
    model = build_classifier(checkpoint, num_classes, config['freeze_backbone'], device)
    optimizer = torch.optim.SGD(
        [p for p in model.parameters() if p.requires_grad], lr=config['lr'], momentum=config['momentum'], weight_decay=0.0
    )
    epochs = config['epochs']

    def lr_at(epoch):
        return config['lr'] * (1 + math.cos(math.pi * epoch / epochs)) / 2 if epochs else config['lr']

    loader = labelled_loader(train, channels, image_size, config['batch_size'], shuffle=True, seed=seed)
    metrics = MetricsLog(Path(output_dir) / METRICS_NAME) if output_dir else None
    _fit(model, loader, optimizer, epochs, F.cross_entropy, lr_at, config['freeze_backbone'], metrics, device)

    train_scores, train_labels = predict(model, labelled_loader(train, channels, image_size, config['batch_size']), device)
    test_scores, test_labels = predict(model, labelled_loader(test, channels, image_size, config['batch_size']), device)
    results = {f"train_{name}": value for name, value in classification_metrics(train_scores, train_labels).items()}
    results.update(classification_metrics(test_scores, test_labels))
    return EvalReport(
        protocol='finetune-single',
        metrics=results,
        dataset_id=dataset.dataset_id,
        split_sizes={'train': len(train), 'test': len(test)},
        seed=seed,
        checkpoint_hash=checkpoint.content_hash,
    )


def finetune_multi(
    checkpoint: Checkpoint,
    dataset: DatasetHandle,
    config: dict,
    seed: int = 0,
    image_size: int = 0,
    device: str | torch.device = 'cpu',
    output_dir: str | Path | None = None,
) -> EvalReport:
    """Train backbone + linear layer on binary label vectors; report test (and train) MAP."""
    if not is_multilabel(dataset):
        raise ConfigError("finetune task 'multi' needs a multi-label dataset")
    torch.manual_seed(seed)
    train, test = _splits(dataset, config['train_fraction'], seed)
    channels = checkpoint.backbone_spec.in_channels
    model = build_classifier(checkpoint, dataset.num_labels, config['freeze_backbone'], device)
    optimizer = MULTILABEL_OPTIMIZERS[config['optimizer']]([p for p in model.parameters() if p.requires_grad], lr=config['lr'])
    epochs = config['epochs']

    def lr_at(epoch):
        return multilabel_lr_at(epoch, epochs, config['lr'])

    loader = labelled_loader(train, channels, image_size, config['batch_size'], shuffle=True, seed=seed)
    metrics = MetricsLog(Path(output_dir) / METRICS_NAME) if output_dir else None
    _fit(model, loader, optimizer, epochs, multilabel_loss, lr_at, config['freeze_backbone'], metrics, device)

    results = {}
    for name, handle in (('train_map', train), ('map', test)):
        scores, targets = predict(model, labelled_loader(handle, channels, image_size, config['batch_size']), device)
        results[name] = mean_average_precision(scores, targets)
    return EvalReport(
        protocol='finetune-multi',
        metrics=results,
        dataset_id=dataset.dataset_id,
        split_sizes={'train': len(train), 'test': len(test)},
        seed=seed,
        checkpoint_hash=checkpoint.content_hash,
    )
