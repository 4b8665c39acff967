"""
Tests for feature banks, the nearest-neighbour and linear probes, and
probe runs against a checkpoint, including probes after a short
pretraining (slow).
"""

import math
import statistics

import pytest
import torch
from django.conf import settings

from distill.pretrain import pretrain
from geodistill.exceptions import ConfigError, InvalidArgument, NonFiniteLossError
from probing.features import FeatureBank, extract_features
from probing.knn import knn_probe, knn_scores
from probing.linear import linear_probe, train_linear
from probing.probes import run_probe
from runs.config import RunConfig


def clusters(n_per_class=20, seed=0, dim=8, separation=6.0):
    generator = torch.Generator().manual_seed(seed)
    centers = torch.zeros(2, dim, dtype=torch.float64)
    centers[0, 0], centers[1, 1] = separation, separation
    labels = torch.arange(2).repeat_interleave(n_per_class)
    vectors = centers[labels] + 0.3 * torch.randn(len(labels), dim, generator=generator, dtype=torch.float64)
    return FeatureBank(vectors, labels)


def brute_force_votes(train, test, k, temperature, num_classes):
    votes = []
    for query in test.vectors.tolist():
        sims = []
        for index, row in enumerate(train.vectors.tolist()):
            dot = sum(a * b for a, b in zip(query, row))
            sims.append((dot / (math.sqrt(sum(a * a for a in query)) * math.sqrt(sum(b * b for b in row))), index))
        neighbours = sorted(sims, key=lambda pair: (-pair[0], pair[1]))[:k]
        row_votes = [0.0] * num_classes
        for sim, index in neighbours:
            row_votes[int(train.labels[index])] += math.exp(sim / temperature)
        votes.append(row_votes)
    return torch.tensor(votes, dtype=torch.float64)


# ============================================================================
# FEATURE BANK TESTS
# ============================================================================

@pytest.mark.unit
class TestFeatureBank:
    """Test suite for FeatureBank validation"""

    def test_valid_bank(self):
        """Test a well-formed bank reports its shape"""
        bank = FeatureBank(torch.ones(3, 4), torch.tensor([0, 1, 0]))

        assert len(bank) == 3
        assert bank.feature_dim == 4
        assert not bank.multilabel

    def test_label_count_mismatch(self):
        """Test vectors and labels must have the same length"""
        with pytest.raises(InvalidArgument):
            FeatureBank(torch.ones(3, 4), torch.tensor([0, 1]))

    def test_non_finite(self):
        """Test non-finite vectors are rejected"""
        with pytest.raises(InvalidArgument):
            FeatureBank(torch.tensor([[float('inf'), 0.0]]), torch.tensor([0]))

    def test_empty(self):
        """Test an empty bank is rejected"""
        with pytest.raises(InvalidArgument):
            FeatureBank(torch.zeros(0, 4), torch.zeros(0, dtype=torch.long))


# ============================================================================
# KNN TESTS
# ============================================================================

@pytest.mark.unit
class TestKnnProbe:
    """Test suite for the weighted nearest-neighbour probe"""

    def test_identical_point(self):
        """Test a test point equal to a train point takes its label with k = 1"""
        train = FeatureBank(torch.tensor([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.2]]), torch.tensor([2, 0, 1]))
        test = FeatureBank(torch.tensor([[0.0, 1.0]]), torch.tensor([0]))

        assert knn_scores(train, test, k=1, num_classes=3).argmax(1).item() == 0
        assert knn_probe(train, test, k=1)['top1'] == 1.0

    def test_separated_clusters(self):
        """Test two well-separated clusters are classified perfectly"""
        assert knn_probe(clusters(seed=0), clusters(seed=1), k=5)['top1'] == 1.0

    def test_brute_force_oracle(self):
        """Test vote totals against an exhaustive weighted vote for N <= 50"""
        generator = torch.Generator().manual_seed(4)
        for _ in range(25):
            n_train = int(torch.randint(5, 51, (1,), generator=generator))
            k = int(torch.randint(1, n_train + 1, (1,), generator=generator))
            train = FeatureBank(
                torch.randn(n_train, 3, generator=generator, dtype=torch.float64),
                torch.randint(0, 4, (n_train,), generator=generator),
            )
            test = FeatureBank(torch.randn(6, 3, generator=generator, dtype=torch.float64), torch.randint(0, 4, (6,), generator=generator))

            got = knn_scores(train, test, k=k, temperature=0.5, num_classes=4)
            want = brute_force_votes(train, test, k, 0.5, 4)

            assert torch.allclose(got, want, rtol=1e-12, atol=1e-12)
            assert torch.equal(got.argmax(1), want.argmax(1))

    def test_tied_neighbours_in_training_order(self):
        """Test duplicated training vectors are taken in training order"""
        train = FeatureBank(torch.tensor([[1.0, 1.0], [1.0, 1.0], [-1.0, 0.0]]), torch.tensor([1, 0, 0]))
        test = FeatureBank(torch.tensor([[2.0, 2.0]]), torch.tensor([1]))

        assert knn_scores(train, test, k=1, num_classes=2).argmax(1).item() == 1

    def test_multilabel_rejected(self):
        """Test multi-label banks are rejected"""
        train = FeatureBank(torch.ones(3, 2), torch.ones(3, 2))
        test = FeatureBank(torch.ones(1, 2), torch.tensor([0]))

        with pytest.raises(InvalidArgument):
            knn_probe(train, test)

    def test_k_larger_than_bank(self):
        """Test k may not exceed the number of training vectors"""
        with pytest.raises(InvalidArgument):
            knn_probe(clusters(n_per_class=2), clusters(), k=5)


# ============================================================================
# LINEAR PROBE TESTS
# ============================================================================

@pytest.mark.unit
class TestLinearProbe:
    """Test suite for the linear probe"""

    def test_separable(self):
        """Test a linearly separable bank reaches accuracy 1"""
        metrics = linear_probe(clusters(seed=0), clusters(seed=1), epochs=30, lr=0.1, batch_size=8)

        assert metrics['top1'] == 1.0

    def test_zero_epochs_is_untrained(self):
        """Test an untrained classifier predicts class 0 everywhere"""
        test = clusters(seed=1)

        metrics = linear_probe(clusters(seed=0), test, epochs=0)

        assert metrics['top1'] == pytest.approx(0.5)

    def test_label_permutation(self):
        """Test permuting class ids permutes predictions identically"""
        train, test = clusters(seed=0), clusters(seed=1)
        permutation = torch.tensor([1, 0])
        permuted = FeatureBank(train.vectors, permutation[train.labels])

        original = train_linear(train, 2, epochs=5, lr=0.05, batch_size=8)
        swapped = train_linear(permuted, 2, epochs=5, lr=0.05, batch_size=8)

        with torch.no_grad():
            assert torch.equal(permutation[original(test.vectors).argmax(1)], swapped(test.vectors).argmax(1))

    def test_divergence_aborts(self):
        """Test an exploding loss raises NonFiniteLossError"""
        with pytest.raises(NonFiniteLossError):
            linear_probe(clusters(), clusters(seed=1), epochs=3, lr=1e308, batch_size=8)


# ============================================================================
# CHECKPOINT PROBE TESTS
# ============================================================================

@pytest.mark.integration
class TestRunProbe:
    """Test suite for probes run from a checkpoint"""

    def test_extract_features(self, tiny_checkpoint, synth_dataset):
        """Test N images give N deterministic rows"""
        handle = synth_dataset('textures-4class', n=6)

        first = extract_features(tiny_checkpoint, handle, batch_size=4)
        second = extract_features(tiny_checkpoint, handle, batch_size=4)

        assert first.vectors.shape == (6, tiny_checkpoint.backbone_spec.feature_dim)
        assert torch.equal(first.vectors, second.vectors)
        assert first.source == tiny_checkpoint.content_hash

    def test_resized_features(self, tiny_checkpoint, synth_dataset):
        """Test a fixed image_size resizes every image to one resolution"""
        handle = synth_dataset('textures-4class', n=4, size=48)

        bank = extract_features(tiny_checkpoint, handle, image_size=32)

        assert len(bank) == 4

    @pytest.mark.parametrize('protocol', ['knn', 'linear'])
    def test_report(self, tiny_checkpoint, tiny_config, synth_dataset, protocol):
        """Test a probe run yields a report with provenance"""
        handle = synth_dataset('textures-4class', n=12, splits={'train': 0.5, 'test': 0.5})
        config = {**tiny_config['probe'], 'protocol': protocol}

        report = run_probe(tiny_checkpoint, handle, config, seed=0)

        assert report.protocol == protocol
        assert 0.0 <= report.metrics['top1'] <= 1.0
        assert report.split_sizes == {'train': 6, 'test': 6}
        assert report.checkpoint_hash == tiny_checkpoint.content_hash

    def test_multilabel_dataset_rejected(self, tiny_checkpoint, tiny_config, synth_dataset):
        """Test probes refuse multi-label data"""
        handle = synth_dataset('multilabel-motifs', n=6, splits={'train': 0.5, 'test': 0.5})

        with pytest.raises(ConfigError):
            run_probe(tiny_checkpoint, handle, tiny_config['probe'])


# ============================================================================
# DESK-SCALE BEHAVIOUR
# ============================================================================

@pytest.mark.slow
class TestProbesAfterPretraining:
    """Probes over teacher features after a short multi-crop pretraining"""

    def test_knn_and_linear_reach_085(self, synth_dataset, tiny_config_data, tmp_path):
        """Test 10 epochs on 2,000 textures give median top-1 >= 0.85 on 400 held-out images"""
        handle = synth_dataset('textures-4class', n=2400, splits={'train': 5 / 6, 'test': 1 / 6})
        assert handle.split_sizes == {'train': 2000, 'test': 400}
        probe = {**settings.GEODISTILL_DEFAULTS['probe'], 'lr': 0.05}
        scores = {'knn': [], 'linear': []}

        for seed in range(3):
            config = RunConfig.from_mapping({
                **tiny_config_data,
                'run': {**tiny_config_data['run'], 'seed': seed, 'log_every': 50},
                'optimizer': {'batch_size': 32},
                'schedule': {'epochs': 10, 'warmup_epochs': 2, 'freeze_last_layer_epochs': 1},
                'distill': {'warmup_teacher_temp_epochs': 10},
            })
            result = pretrain(config, handle.split('train'), 'mc', output_dir=tmp_path / f"seed{seed}")

            for protocol in scores:
                report = run_probe(result.checkpoint, handle, {**probe, 'protocol': protocol}, seed=seed)
                scores[protocol].append(report.metrics['top1'])

        assert probe['k'] == 20
        assert statistics.median(scores['knn']) >= 0.85
        assert statistics.median(scores['linear']) >= 0.85
