"""
Decoder-only training of the change U-Net and validation scoring.

Validation reports both conventions: ``pixel_*`` scores aggregate the
confusion counts over every validation pixel, ``image_mean_*`` scores
average the per-pair scores. Per-pair F1 is also written to
``per_pair_f1.csv`` and, when asked, predicted masks to ``masks/``.
"""
from __future__ import annotations

import csv
import hashlib
import logging
import math
from pathlib import Path
from typing import Sequence

import torch
from torch import nn
from torch.utils.data import DataLoader, Dataset

from backbones.networks import as_batch
from geodistill.exceptions import ConfigError, InvalidState, NonFiniteLossError
from imaging.planes import save_mask
from probing.reports import EvalReport
from runs.checkpoints import Checkpoint
from runs.ingest import DatasetHandle
from runs.metrics_log import METRICS_NAME, MetricsLog

from .losses import PixelCounts, change_loss, predict_mask
from .unet import ChangePair, ChangeUNet, UNetSpec

logger = logging.getLogger(__name__)

PER_PAIR_NAME = 'per_pair_f1.csv'
MASKS_DIR = 'masks'


def state_hash(module: nn.Module) -> str:
    """SHA-256 over every parameter and buffer, keys in sorted order."""
    digest = hashlib.sha256()
    for name, tensor in sorted(module.state_dict().items()):
        digest.update(name.encode('utf-8'))
        digest.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return digest.hexdigest()


class ChangePairs(Dataset):
    def __init__(self, handle: DatasetHandle, channels: int, dtype: torch.dtype = torch.float32):
        if handle.layout != 'pair+mask':
            raise ConfigError(f"change detection needs the pair+mask layout, dataset layout is {handle.layout!r}")
        self.handle = handle
        self.channels = channels
        self.dtype = dtype

    def __len__(self) -> int:
        return len(self.handle)

    def pair(self, index: int) -> ChangePair:
        item = self.handle.items[index]
        return ChangePair.load(item.paths, item.mask, self.channels, key=item.key, dtype=self.dtype)

    def __getitem__(self, index: int):
        pair = self.pair(index)
        return pair.image_a.data, pair.image_b.data, pair.mask


def collate_pairs(samples: Sequence[tuple[torch.Tensor, torch.Tensor, torch.Tensor]]):
    images_a, images_b, masks = zip(*samples)
    return as_batch(list(images_a)), as_batch(list(images_b)), torch.stack(masks)


def build_unet(checkpoint: Checkpoint, decoder_widths, device) -> ChangeUNet:
    spec = UNetSpec(encoder=checkpoint.backbone_spec, decoder_widths=tuple(decoder_widths))
    model = ChangeUNet(spec, checkpoint.teacher_backbone())
    return model.to(device=device, dtype=checkpoint.dtype)


def _splits(dataset: DatasetHandle) -> tuple[DatasetHandle, DatasetHandle]:
    missing = {'train', 'test'} - set(dataset.splits)
    if missing:
        raise ConfigError(f"change detection needs train and test splits; missing {sorted(missing)}")
    train, test = dataset.split('train'), dataset.split('test')
    if len(train) < 1:
        raise ConfigError("change detection needs at least one training pair")
    return train, test


def fit_decoder(
    model: ChangeUNet,
    loader: DataLoader,
    epochs: int,
    lr: float,
    smooth: float,
    device,
    metrics: MetricsLog | None = None,
) -> list[float]:
    optimizer = torch.optim.Adam(model.decoder_parameters(), lr=lr)
    dtype = model.head.weight.dtype
    epoch_losses = []
    step = 0
    for epoch in range(epochs):
        model.train()
        losses = []
        for images_a, images_b, masks in loader:
            logits = model(images_a.to(device=device, dtype=dtype), images_b.to(device=device, dtype=dtype))
            loss = change_loss(logits, masks.to(device), smooth)
            if not math.isfinite(loss.item()):
                raise NonFiniteLossError(f"change loss became {loss.item()} at step {step}", {'epoch': epoch, 'step': step})
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            losses.append(loss.item())
            step += 1
        epoch_losses.append(sum(losses) / len(losses))
        if metrics is not None:
            metrics.write(epoch=epoch, step=step, loss=epoch_losses[-1], lr=lr)
        logger.info("changedet epoch %d/%d loss %.4f", epoch + 1, epochs, epoch_losses[-1])
    return epoch_losses


@torch.no_grad()
def evaluate_pairs(
    model: ChangeUNet,
    pairs: ChangePairs,
    threshold: float,
    device,
    masks_dir: Path | None = None,
) -> tuple[dict[str, float], list[tuple[str, float]]]:
    """Aggregate and per-pair scores over every pair of ``pairs``."""
    model.eval()
    dtype = model.head.weight.dtype
    total = PixelCounts()
    per_pair = []
    image_scores = []
    for index in range(len(pairs)):
        image_a, image_b, mask = pairs[index]
        logits = model(image_a[None].to(device=device, dtype=dtype), image_b[None].to(device=device, dtype=dtype))[0]
        predicted = predict_mask(logits, threshold).cpu()
        counts = PixelCounts.count(predicted, mask)
        total = total + counts
        scores = counts.scores()
        image_scores.append(scores)
        key = pairs.handle.items[index].key
        per_pair.append((key, scores[2]))
        if masks_dir is not None:
            save_mask(predicted, masks_dir / f"{key}.png")

    precision, recall, f1 = total.scores()
    metrics = {'pixel_precision': precision, 'pixel_recall': recall, 'pixel_f1': f1}
    if image_scores:
        for position, name in enumerate(('precision', 'recall', 'f1')):
            metrics[f'image_mean_{name}'] = sum(s[position] for s in image_scores) / len(image_scores)
    return metrics, per_pair


def write_per_pair(path: Path, rows: list[tuple[str, float]]) -> None:
    with path.open('w', newline='', encoding='utf-8') as handle:
        writer = csv.writer(handle)
        writer.writerow(['pair', 'f1'])
        for key, f1 in rows:
            writer.writerow([key, f"{f1:.6f}"])


def train_changedet(
    checkpoint: Checkpoint,
    dataset: DatasetHandle,
    config: dict,
    seed: int = 0,
    device: str | torch.device = 'cpu',
    output_dir: str | Path | None = None,
) -> tuple[ChangeUNet, EvalReport]:
    """Train the decoder on the train pairs and score the test pairs."""
    if not checkpoint.backbone_spec.is_convnet:
        raise ConfigError(f"change detection needs a convnet encoder, checkpoint has {checkpoint.backbone_spec.family!r}")
    torch.manual_seed(seed)
    train, test = _splits(dataset)
    model = build_unet(checkpoint, config['decoder_widths'], device)
    encoder_hash = state_hash(model.encoder)
    channels = checkpoint.backbone_spec.in_channels

    train_pairs = ChangePairs(train, channels, checkpoint.dtype)
    loader = DataLoader(
        train_pairs,
        batch_size=min(config['batch_size'], len(train_pairs)),
        shuffle=True,
        collate_fn=collate_pairs,
        generator=torch.Generator().manual_seed(seed),
    )
    output_dir = Path(output_dir) if output_dir else None
    metrics_log = MetricsLog(output_dir / METRICS_NAME) if output_dir else None
    epoch_losses = fit_decoder(model, loader, config['epochs'], config['lr'], config['dice_smooth'], device, metrics_log)

    if state_hash(model.encoder) != encoder_hash:
        raise InvalidState("encoder parameters changed during decoder training")

    masks_dir = None
    if output_dir and config['save_masks']:
        masks_dir = output_dir / MASKS_DIR
        masks_dir.mkdir(parents=True, exist_ok=True)
    metrics, per_pair = evaluate_pairs(model, ChangePairs(test, channels, checkpoint.dtype), config['threshold'], device, masks_dir)
    if output_dir:
        write_per_pair(output_dir / PER_PAIR_NAME, per_pair)
    logger.info("changedet on %s: %s", dataset.dataset_id, metrics)

    report = EvalReport(
        protocol='changedet',
        metrics=metrics,
        dataset_id=dataset.dataset_id,
        split_sizes={'train': len(train), 'test': len(test)},
        seed=seed,
        checkpoint_hash=checkpoint.content_hash,
        details={
            'encoder_hash': encoder_hash,
            'epoch_losses': epoch_losses,
            'per_pair_f1': dict(per_pair),
        },
    )
    return model, report
