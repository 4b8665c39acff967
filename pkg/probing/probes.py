"""Frozen-feature probes run against a checkpoint and a split dataset."""
from __future__ import annotations

import logging

import torch

from geodistill.exceptions import ConfigError
from runs.checkpoints import Checkpoint
from runs.ingest import DatasetHandle

from .data import is_multilabel
from .features import extract_features
from .knn import knn_probe
from .linear import linear_probe
from .reports import EvalReport

logger = logging.getLogger(__name__)


def run_probe(
    checkpoint: Checkpoint,
    dataset: DatasetHandle,
    config: dict,
    seed: int = 0,
    image_size: int = 0,
    device: str | torch.device = 'cpu',
) -> EvalReport:
    """Extract train/test features once and score them with the configured protocol."""
    if is_multilabel(dataset):
        raise ConfigError("probes need a single-label dataset")
    missing = {'train', 'test'} - set(dataset.splits)
    if missing:
        raise ConfigError(f"probing needs train and test splits; missing {sorted(missing)}")
    train = extract_features(checkpoint, dataset.split('train'), image_size, config['batch_size'], device)
    test = extract_features(checkpoint, dataset.split('test'), image_size, config['batch_size'], device)

    protocol = config['protocol']
    if protocol == 'knn':
        metrics = knn_probe(train, test, k=min(config['k'], len(train)), temperature=config['knn_temperature'])
    else:
        metrics = linear_probe(train, test, config['epochs'], config['lr'], config['batch_size'], seed=seed)
    logger.info("%s probe on %s: %s", protocol, dataset.dataset_id, metrics)
    return EvalReport(
        protocol=protocol,
        metrics=metrics,
        dataset_id=dataset.dataset_id,
        split_sizes={'train': len(train), 'test': len(test)},
        seed=seed,
        checkpoint_hash=checkpoint.content_hash,
    )
