"""
Tests for end-to-end fine-tuning.
"""

import pytest

from geodistill.exceptions import ConfigError
from probing.finetune import build_classifier, finetune_multi, finetune_single, multilabel_lr_at
from runs.metrics_log import read_metrics

SPLITS = {'train': 0.5, 'test': 0.5}


@pytest.fixture
def finetune_config(tiny_config):
    return dict(tiny_config['finetune'])


# ============================================================================
# LEARNING RATE SCHEDULE TESTS
# ============================================================================

@pytest.mark.unit
class TestMultilabelSchedule:
    """Test suite for the multi-label step-down learning rate"""

    def test_trace_for_ten_epochs(self):
        """Test lr is 1e-5 before epoch 6, 1e-6 before epoch 8, 1e-7 after"""
        trace = [multilabel_lr_at(epoch, 10, 1e-5) for epoch in range(10)]

        assert trace == [1e-5] * 6 + [1e-6] * 2 + [1e-7] * 2

    def test_boundaries_for_hundred_epochs(self):
        """Test the drops land exactly on epochs 60 and 80"""
        assert multilabel_lr_at(59, 100, 1e-5) == 1e-5
        assert multilabel_lr_at(60, 100, 1e-5) == 1e-6
        assert multilabel_lr_at(79, 100, 1e-5) == 1e-6
        assert multilabel_lr_at(80, 100, 1e-5) == 1e-7

    def test_fractional_boundaries_round_up(self):
        """Test 60% of 7 epochs starts the first drop at epoch 5"""
        assert multilabel_lr_at(4, 7, 1.0) == 1.0
        assert multilabel_lr_at(5, 7, 1.0) == 0.1


# ============================================================================
# FINE-TUNING RUN TESTS
# ============================================================================

@pytest.mark.integration
class TestFinetune:
    """Test suite for single- and multi-label fine-tuning runs"""

    def test_single_report(self, tiny_checkpoint, synth_dataset, finetune_config, tmp_path):
        """Test single-label fine-tuning reports top-1 and logs every epoch"""
        handle = synth_dataset('textures-4class', n=16, splits=SPLITS)

        report = finetune_single(tiny_checkpoint, handle, finetune_config, output_dir=tmp_path / 'ft')

        assert report.protocol == 'finetune-single'
        assert set(report.metrics) == {'top1', 'train_top1'}
        assert report.split_sizes == {'train': 8, 'test': 8}
        records = read_metrics(tmp_path / 'ft' / 'metrics.jsonl')
        assert [record['epoch'] for record in records] == [0, 1]
        assert records[0]['lr'] == pytest.approx(finetune_config['lr'])

    def test_single_is_deterministic(self, tiny_checkpoint, synth_dataset, finetune_config):
        """Test equal seeds give equal reports"""
        handle = synth_dataset('textures-4class', n=16, splits=SPLITS)

        first = finetune_single(tiny_checkpoint, handle, finetune_config, seed=3)
        second = finetune_single(tiny_checkpoint, handle, finetune_config, seed=3)

        assert first.to_json() == second.to_json()

    def test_multi_report(self, tiny_checkpoint, synth_dataset, finetune_config):
        """Test multi-label fine-tuning reports MAP"""
        handle = synth_dataset('multilabel-motifs', n=16, splits=SPLITS)
        config = {**finetune_config, 'task': 'multi', 'lr': 1e-3}

        report = finetune_multi(tiny_checkpoint, handle, config)

        assert report.protocol == 'finetune-multi'
        assert set(report.metrics) == {'map', 'train_map'}

    def test_train_fraction(self, tiny_checkpoint, synth_dataset, finetune_config):
        """Test a quarter training subset keeps ceil(0.25 * N) images"""
        handle = synth_dataset('multilabel-motifs', n=40, splits=SPLITS)
        config = {**finetune_config, 'task': 'multi', 'train_fraction': 0.25, 'epochs': 1}

        report = finetune_multi(tiny_checkpoint, handle, config)

        assert report.split_sizes == {'train': 5, 'test': 20}

    def test_layout_mismatch(self, tiny_checkpoint, synth_dataset, finetune_config):
        """Test each task refuses the other task's labels"""
        single = synth_dataset('textures-4class', n=8, splits=SPLITS)
        multi = synth_dataset('multilabel-motifs', n=8, splits=SPLITS)

        with pytest.raises(ConfigError):
            finetune_single(tiny_checkpoint, multi, finetune_config)
        with pytest.raises(ConfigError):
            finetune_multi(tiny_checkpoint, single, finetune_config)

    def test_missing_test_split(self, tiny_checkpoint, synth_dataset, finetune_config):
        """Test fine-tuning needs train and test splits"""
        handle = synth_dataset('textures-4class', n=8)

        with pytest.raises(ConfigError):
            finetune_single(tiny_checkpoint, handle, finetune_config)

    def test_frozen_backbone_trains_only_classifier(self, tiny_checkpoint):
        """Test freezing leaves only the classifier trainable"""
        model = build_classifier(tiny_checkpoint, 4, freeze_backbone=True, device='cpu')

        trainable = {name for name, p in model.named_parameters() if p.requires_grad}

        assert trainable == {'fc.weight', 'fc.bias'}


@pytest.mark.slow
class TestFinetuneDeskScale:
    """Short fine-tuning runs on synthetic labelled sets"""

    def test_single_reaches_full_train_accuracy(self, tiny_checkpoint, synth_dataset, finetune_config):
        """Test 32 training images of 4 classes are fitted within 200 steps"""
        handle = synth_dataset('textures-4class', n=40, splits={'train': 0.8, 'test': 0.2})
        config = {**finetune_config, 'lr': 3e-3, 'epochs': 200, 'batch_size': 32}

        report = finetune_single(tiny_checkpoint, handle, config)

        assert report.split_sizes['train'] == 32
        assert report.metrics['train_top1'] == 1.0

    def test_multi_reaches_map_09(self, desk_checkpoint, synth_dataset, finetune_config, tmp_path):
        """Test multi-label fine-tuning on motif presence reaches test MAP 0.9"""
        handle = synth_dataset('multilabel-motifs', n=300, size=48, splits={'train': 0.8, 'test': 0.2})
        config = {**finetune_config, 'task': 'multi', 'lr': 1e-3, 'epochs': 30, 'batch_size': 16}

        report = finetune_multi(desk_checkpoint, handle, config, output_dir=tmp_path / 'multi')

        assert report.split_sizes == {'train': 240, 'test': 60}
        assert report.metrics['map'] >= 0.9
        lrs = [record['lr'] for record in read_metrics(tmp_path / 'multi' / 'metrics.jsonl')]
        assert lrs == [1e-3] * 18 + [1e-4] * 6 + [1e-5] * 6
