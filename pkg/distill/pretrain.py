"""
The pretraining loop: multi-crop (mc), temporal-positive (tp) and the
fixed-local-size baseline share everything but how view sets are built.
"""
from __future__ import annotations

import logging
import statistics
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn
from torch.utils.data import DataLoader, Dataset

from backbones.specs import BackboneSpec, ProjectionHeadSpec
from geodistill.exceptions import ConfigError
from imaging.multicrop import MultiCropConfig, ViewSet, make_viewset_mc
from imaging.planes import load_plane
from runs.checkpoints import FLOAT_DTYPES, Checkpoint
from runs.config import RunConfig
from runs.ingest import DatasetHandle
from runs.metrics_log import METRICS_NAME, MetricsLog

from .engine import DistillState, collate_viewsets, train_step
from .schedules import cosine_schedule, teacher_temperature_schedule
from .temporal import make_viewset_tp

logger = logging.getLogger(__name__)

MODES = ('mc', 'tp', 'baseline')
CHECKPOINT_NAME = 'checkpoint.zip'


def resolve_mode(mode: str) -> str:
    """Accept ``mc`` as well as the run-config spelling ``pretrain-mc``."""
    short = mode.removeprefix('pretrain-')
    if short not in MODES:
        raise ConfigError(f"unknown pretraining mode {mode!r}; choose one of {list(MODES)}")
    return short


def instance_seed(seed: int, epoch: int, index: int) -> int:
    state = np.random.SeedSequence([seed, epoch, index]).generate_state(2, dtype=np.uint32)
    return (int(state[0]) << 32 | int(state[1])) & ((1 << 63) - 1)


def multicrop_for_mode(config: RunConfig, mode: str) -> MultiCropConfig:
    multicrop = MultiCropConfig.from_section(config['augment'])
    if mode == 'baseline':
        return multicrop.with_fixed_local_size(config['augment']['baseline_local_size'])
    return multicrop


class ViewSetDataset(Dataset):
    """One ViewSet per instance; the augmentation seed depends only on (seed, epoch, index)."""

    def __init__(self, handle: DatasetHandle, mode: str, multicrop: MultiCropConfig, channels: int, seed: int):
        if mode == 'tp':
            if handle.layout != 'temporal-stacks':
                raise ConfigError(f"temporal pretraining needs temporal stacks, dataset layout is {handle.layout!r}")
            self.sources = [item.paths for item in handle.items]
        else:
            self.sources = [(path,) for path in handle.image_paths()]
        self.mode = mode
        self.multicrop = multicrop
        self.channels = channels
        self.seed = seed
        self.epoch = 0

    def set_epoch(self, epoch: int) -> None:
        self.epoch = epoch

    def __len__(self) -> int:
        return len(self.sources)

    def __getitem__(self, index: int) -> ViewSet:
        rng = torch.Generator().manual_seed(instance_seed(self.seed, self.epoch, index))
        planes = [load_plane(path, channels=self.channels) for path in self.sources[index]]
        if self.mode == 'tp':
            return make_viewset_tp(planes, self.multicrop, rng)
        return make_viewset_mc(planes[0], self.multicrop, rng)


def parameter_groups(module: nn.Module) -> list[dict]:
    """Weight decay on weight matrices and kernels only; biases and norm scales are exempt."""
    regularized, exempt = [], []
    for name, param in module.named_parameters():
        if not param.requires_grad:
            continue
        if name.endswith('.bias') or param.ndim == 1:
            exempt.append(param)
        else:
            regularized.append(param)
    return [{'params': regularized}, {'params': exempt, 'weight_decay': 0.0}]


@dataclass
class PretrainResult:
    checkpoint: Checkpoint
    checkpoint_path: Path
    metrics_path: Path
    final_loss: float
    epoch_losses: list[float]
    steps: int


def pretrain(
    config: RunConfig,
    dataset: DatasetHandle,
    mode: str | None = None,
    output_dir: str | Path | None = None,
) -> PretrainResult:
    """Train student and teacher on ``dataset`` and save the teacher checkpoint."""
    mode = resolve_mode(mode or config.mode)
    if len(dataset) == 0:
        raise ConfigError("cannot pretrain on an empty dataset")
    output_dir = Path(output_dir or config.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)

    run, optim, schedule, distill = config['run'], config['optimizer'], config['schedule'], config['distill']
    device = torch.device(run['device'])
    dtype = FLOAT_DTYPES[run['float_width']]
    torch.manual_seed(run['seed'])

    backbone_spec = BackboneSpec.from_dict(config['backbone'])
    head_spec = ProjectionHeadSpec.from_dict(config['head'])
    data = ViewSetDataset(dataset, mode, multicrop_for_mode(config, mode), backbone_spec.in_channels, run['seed'])
    batch_size = min(optim['batch_size'], len(data))
    loader = DataLoader(
        data,
        batch_size=batch_size,
        shuffle=True,
        drop_last=True,
        collate_fn=collate_viewsets,
        num_workers=run['num_workers'],
        generator=torch.Generator().manual_seed(run['seed']),
    )

    epochs, iters_per_epoch = schedule['epochs'], len(loader)
    total_steps = epochs * iters_per_epoch
    lr_schedule = cosine_schedule(optim['lr'], optim['min_lr'], epochs, iters_per_epoch, schedule['warmup_epochs'])
    temperatures = teacher_temperature_schedule(
        distill['warmup_teacher_temp'], distill['teacher_temp'], distill['warmup_teacher_temp_epochs'], epochs
    )

    state = DistillState.create(
        backbone_spec,
        head_spec,
        total_steps,
        dtype=dtype,
        device=device,
        student_temp=distill['student_temp'],
        teacher_temp=float(temperatures[0]),
        center_momentum=distill['center_momentum'],
        momentum_base=distill['momentum_base'],
        centering=distill['centering'],
        clip_grad=optim['clip_grad'] or None,
    )
    optimizer = torch.optim.AdamW(
        parameter_groups(state.student), lr=float(lr_schedule[0]), weight_decay=optim['weight_decay']
    )
    metrics = MetricsLog(output_dir / METRICS_NAME)
    logger.info(
        "Pretraining (%s) on %d instances: %d epochs x %d steps, batch %d, %s/%s",
        mode, len(data), epochs, iters_per_epoch, batch_size, device, dtype,
    )

    epoch_losses: list[float] = []
    for epoch in range(epochs):
        data.set_epoch(epoch)
        state.teacher_temp = float(temperatures[epoch])
        state.freeze_last_layer = epoch < schedule['freeze_last_layer_epochs']
        state.student.train()
        losses = []
        for batch in loader:
            step = state.step
            lr = float(lr_schedule[step])
            for group in optimizer.param_groups:
                group['lr'] = lr
            result = train_step(state, batch.to(device, dtype), optimizer)
            losses.append(result.loss)
            if step % run['log_every'] == 0 or step == total_steps - 1:
                metrics.write(
                    step=step,
                    epoch=epoch,
                    loss=result.loss,
                    teacher_temp=state.teacher_temp,
                    lr=lr,
                    teacher_entropy=result.teacher_entropy,
                    pairs=result.pairs,
                    **{'lambda': result.lam},
                )
                logger.info(
                    "epoch %d step %d loss %.4f lambda %.5f teacher_temp %.4f entropy %.4f lr %.2e",
                    epoch, step, result.loss, result.lam, state.teacher_temp, result.teacher_entropy, lr,
                )
        epoch_losses.append(statistics.fmean(losses))
        logger.info("Epoch %d/%d finished, mean loss %.4f", epoch + 1, epochs, epoch_losses[-1])

        if run['checkpoint_every'] and (epoch + 1) % run['checkpoint_every'] == 0 and epoch + 1 < epochs:
            _checkpoint(state, config, dataset, mode, epoch_losses).save(output_dir / f"checkpoint-epoch{epoch + 1:04d}.zip")

    checkpoint = _checkpoint(state, config, dataset, mode, epoch_losses)
    checkpoint_path = output_dir / CHECKPOINT_NAME
    checkpoint.save(checkpoint_path)
    config.save(output_dir / 'config.toml')
    return PretrainResult(
        checkpoint=checkpoint,
        checkpoint_path=checkpoint_path,
        metrics_path=metrics.path,
        final_loss=epoch_losses[-1],
        epoch_losses=epoch_losses,
        steps=state.step,
    )


def _checkpoint(state: DistillState, config: RunConfig, dataset: DatasetHandle, mode: str, losses: list[float]) -> Checkpoint:
    return Checkpoint.from_networks(
        state.teacher,
        student=state.student,
        center=state.center,
        step=state.step,
        config=config.snapshot(),
        provenance={
            'mode': mode,
            'dataset_id': dataset.dataset_id,
            'seed': config.seed,
            'epochs_completed': len(losses),
            'epoch_losses': losses,
        },
    )
