"""
Run orchestration shared by the management commands and the Celery task.

A run is recorded as a ``TrainingRun`` row, executed under the output
directory lock, and finishes SUCCEEDED or FAILED with the error message
kept on the row. Evaluation reports are written to ``report.json`` and
stored as ``EvalRecord`` rows.
"""
from __future__ import annotations

import logging
from pathlib import Path

import torch
from django.utils import timezone

from changedet.training import train_changedet
from distill.pretrain import pretrain
from geodistill.exceptions import ConfigError
from probing.finetune import finetune_multi, finetune_single
from probing.probes import run_probe
from probing.reports import REPORT_NAME, EvalReport

from .checkpoints import Checkpoint
from .config import RunConfig
from .ingest import DatasetHandle, ingest_folder
from .locking import output_lock
from .models import EvalRecord, TrainingRun

logger = logging.getLogger(__name__)


def kind_for_mode(mode: str) -> str:
    if mode.startswith('pretrain-'):
        return 'PRETRAIN'
    return mode.upper()


def load_dataset(config: RunConfig) -> DatasetHandle:
    section = config['dataset']
    if not section['root']:
        raise ConfigError("dataset.root is not set", errors={'dataset': {'root': ['This field is required.']}})
    return ingest_folder(Path(section['root']).expanduser(), section['layout'], splits=section['splits'], seed=config.seed)


def create_run(config: RunConfig, checkpoint_path: str | Path = '') -> TrainingRun:
    """Record a QUEUED run for ``config``; evaluation runs name the checkpoint they read."""
    if kind_for_mode(config.mode) != 'PRETRAIN' and not checkpoint_path:
        raise ConfigError(f"mode {config.mode!r} needs a checkpoint")
    return TrainingRun.objects.create(
        kind=kind_for_mode(config.mode),
        mode=config.mode,
        seed=config.seed,
        config=config.snapshot(),
        output_dir=str(config.output_dir),
        checkpoint_path=str(checkpoint_path),
    )


def record_report(run: TrainingRun, report: EvalReport) -> EvalRecord:
    report.save(Path(run.output_dir) / REPORT_NAME)
    return EvalRecord.objects.create(
        run=run,
        protocol=report.protocol,
        metrics=report.metrics,
        dataset_id=report.dataset_id,
        split_sizes=report.split_sizes,
        seed=report.seed,
        checkpoint_hash=report.checkpoint_hash,
    )


# ============================================================================
# RUNNERS
# ============================================================================

def _pretrain(run: TrainingRun, config: RunConfig) -> None:
    result = pretrain(config, load_dataset(config), output_dir=run.output_dir)
    run.checkpoint_path = str(result.checkpoint_path)
    run.checkpoint_hash = result.checkpoint.content_hash
    run.final_loss = result.final_loss


def _evaluation_inputs(run: TrainingRun, config: RunConfig) -> tuple[Checkpoint, DatasetHandle, torch.device]:
    checkpoint = Checkpoint.load(run.checkpoint_path)
    run.checkpoint_hash = checkpoint.content_hash
    return checkpoint, load_dataset(config), torch.device(config['run']['device'])


def _probe(run: TrainingRun, config: RunConfig) -> None:
    checkpoint, dataset, device = _evaluation_inputs(run, config)
    report = run_probe(checkpoint, dataset, config['probe'], config.seed, config['dataset']['image_size'], device)
    record_report(run, report)


def _finetune(run: TrainingRun, config: RunConfig) -> None:
    checkpoint, dataset, device = _evaluation_inputs(run, config)
    section = config['finetune']
    finetune = finetune_single if section['task'] == 'single' else finetune_multi
    report = finetune(checkpoint, dataset, section, config.seed, config['dataset']['image_size'], device, run.output_dir)
    record_report(run, report)


def _changedet(run: TrainingRun, config: RunConfig) -> None:
    checkpoint, dataset, device = _evaluation_inputs(run, config)
    _, report = train_changedet(checkpoint, dataset, config['changedet'], config.seed, device, run.output_dir)
    run.final_loss = report.details['epoch_losses'][-1] if report.details['epoch_losses'] else None
    record_report(run, report)


RUNNERS = {
    'PRETRAIN': _pretrain,
    'PROBE': _probe,
    'FINETUNE': _finetune,
    'CHANGEDET': _changedet,
}


def execute_run(run: TrainingRun) -> TrainingRun:
    """Run ``run`` to completion; failures are recorded and re-raised."""
    config = RunConfig.from_mapping(run.config)
    run.status = 'RUNNING'
    run.started_at = timezone.now()
    run.save()
    try:
        with output_lock(run.output_dir):
            RUNNERS[run.kind](run, config)
    except Exception as exc:
        run.status = 'FAILED'
        run.error = str(exc)
        run.finished_at = timezone.now()
        run.save()
        raise
    run.status = 'SUCCEEDED'
    run.finished_at = timezone.now()
    run.save()
    return run
