"""
Tests for the change U-Net and decoder-only training.
"""

import csv

import pytest
import torch
from django.conf import settings

from backbones.networks import build_backbone, count_parameters
from changedet.training import state_hash, train_changedet
from changedet.unet import ChangePair, ChangeUNet, UNetSpec, unet_forward
from geodistill.exceptions import ConfigError, InvalidArgument, UnsupportedOperation
from imaging.planes import ImagePlane

SPLITS = {'train': 0.5, 'test': 0.5}


@pytest.fixture
def unet(tiny_backbone_spec):
    torch.manual_seed(0)
    spec = UNetSpec(encoder=tiny_backbone_spec, decoder_widths=(16, 8, 8, 8))
    return ChangeUNet(spec, build_backbone(tiny_backbone_spec))


@pytest.fixture
def changedet_config(tiny_config):
    return dict(tiny_config['changedet'])


# ============================================================================
# DOMAIN TYPE TESTS
# ============================================================================

@pytest.mark.unit
class TestChangeTypes:
    """Test suite for ChangePair and UNetSpec validation"""

    def test_pair_size_mismatch(self):
        """Test pair halves must share one size"""
        with pytest.raises(InvalidArgument):
            ChangePair(ImagePlane(torch.zeros(3, 8, 8)), ImagePlane(torch.zeros(3, 8, 9)), torch.zeros(8, 8))

    def test_pair_mask_not_binary(self):
        """Test masks must hold only 0 and 1"""
        plane = ImagePlane(torch.zeros(3, 4, 4))

        with pytest.raises(InvalidArgument):
            ChangePair(plane, plane, torch.full((4, 4), 0.5))

    def test_transformer_encoder_rejected(self, tiny_vit_spec):
        """Test a patch transformer cannot serve as the encoder"""
        with pytest.raises(UnsupportedOperation):
            UNetSpec(encoder=tiny_vit_spec)

    def test_decoder_width_count(self, tiny_backbone_spec):
        """Test one decoder width is needed per skip tap below the deepest"""
        with pytest.raises(InvalidArgument):
            UNetSpec(encoder=tiny_backbone_spec, decoder_widths=(8, 8))

    def test_block_channels(self, tiny_backbone_spec):
        """Test decoder blocks consume the taps deepest first"""
        spec = UNetSpec(encoder=tiny_backbone_spec, decoder_widths=(16, 8, 8, 4))

        assert spec.block_channels() == [(16, 16, 16), (16, 8, 8), (8, 8, 8), (8, 8, 4)]


# ============================================================================
# FORWARD TESTS
# ============================================================================

@pytest.mark.unit
class TestChangeUNet:
    """Test suite for the U-Net forward pass"""

    @pytest.mark.parametrize('size', [32, 48, 96])
    def test_output_matches_input_size(self, unet, size):
        """Test logit maps come out at the input resolution"""
        images = torch.rand(2, 3, size, size)

        assert unet(images, images.flip(0)).shape == (2, size, size)

    def test_identical_images_fuse_to_zero(self, unet):
        """Test a = b makes every fused skip exactly zero"""
        image = torch.rand(1, 3, 32, 32)

        assert all(bool((skip == 0).all()) for skip in unet.fuse(image, image))

    def test_fusion_is_symmetric(self, unet):
        """Test swapping pair halves leaves the logits unchanged"""
        unet.eval()
        a, b = torch.rand(1, 3, 32, 32), torch.rand(1, 3, 32, 32)

        assert torch.equal(unet(a, b), unet(b, a))

    def test_single_pair_forward(self, unet):
        """Test a ChangePair yields an (H, W) logit map"""
        pair = ChangePair(ImagePlane(torch.rand(3, 32, 32)), ImagePlane(torch.rand(3, 32, 32)), torch.zeros(32, 32))

        assert unet_forward(unet.eval(), pair).shape == (32, 32)

    def test_mismatched_halves(self, unet):
        """Test halves of different size are rejected"""
        with pytest.raises(InvalidArgument):
            unet(torch.rand(1, 3, 32, 32), torch.rand(1, 3, 48, 48))

    def test_only_decoder_is_trainable(self, unet):
        """Test freezing leaves the decoder parameter count unchanged"""
        trainable = sum(p.numel() for p in unet.parameters() if p.requires_grad)

        assert trainable == count_parameters(unet.decoder) + count_parameters(unet.refine) + count_parameters(unet.head)
        assert trainable == sum(p.numel() for p in unet.decoder_parameters())

    def test_encoder_stays_in_eval_mode(self, unet):
        """Test train() keeps the encoder's batch norm statistics fixed"""
        unet.train()

        assert not unet.encoder.training
        assert unet.decoder.training and unet.refine.training


# ============================================================================
# TRAINING TESTS
# ============================================================================

@pytest.mark.integration
class TestTrainChangedet:
    """Test suite for decoder-only training runs"""

    def test_encoder_unchanged(self, tiny_checkpoint, synth_dataset, changedet_config, tmp_path):
        """Test the encoder hash is identical before and after training"""
        handle = synth_dataset('change-pairs', n=6, size=32, splits=SPLITS)

        model, report = train_changedet(tiny_checkpoint, handle, changedet_config, output_dir=tmp_path / 'cd')

        assert state_hash(model.encoder) == state_hash(tiny_checkpoint.teacher_backbone())
        assert report.details['encoder_hash'] == state_hash(model.encoder)

    def test_report_and_artifacts(self, tiny_checkpoint, synth_dataset, changedet_config, tmp_path):
        """Test both metric conventions, the per-pair table and the masks are written"""
        handle = synth_dataset('change-pairs', n=6, size=32, splits=SPLITS)
        output = tmp_path / 'cd'

        _, report = train_changedet(tiny_checkpoint, handle, changedet_config, output_dir=output)

        assert report.protocol == 'changedet'
        assert {'pixel_f1', 'pixel_precision', 'pixel_recall', 'image_mean_f1'} <= set(report.metrics)
        with (output / 'per_pair_f1.csv').open() as handle_:
            rows = list(csv.DictReader(handle_))
        assert [row['pair'] for row in rows] == [item.key for item in handle.split('test').items]
        assert len(list((output / 'masks').glob('*.png'))) == 3
        assert (output / 'metrics.jsonl').is_file()

    def test_wrong_layout(self, tiny_checkpoint, synth_dataset, changedet_config):
        """Test a classification dataset is rejected"""
        handle = synth_dataset('textures-4class', n=6, splits=SPLITS)

        with pytest.raises(ConfigError):
            train_changedet(tiny_checkpoint, handle, changedet_config)


@pytest.mark.slow
class TestChangedetLearns:
    """Short run on synthetic change pairs"""

    def test_validation_f1(self, desk_checkpoint, synth_dataset):
        """Test 200 training pairs and 20 epochs at lr 6e-4 reach validation F1 0.8"""
        handle = synth_dataset('change-pairs', n=250, size=64, splits={'train': 0.8, 'test': 0.2})
        config = {**settings.GEODISTILL_DEFAULTS['changedet'], 'batch_size': 8, 'save_masks': False}

        model, report = train_changedet(desk_checkpoint, handle, config)

        assert config['epochs'] == 20 and config['lr'] == 6e-4
        assert report.split_sizes == {'train': 200, 'test': 50}
        assert report.metrics['pixel_f1'] >= 0.8
        assert state_hash(model.encoder) == state_hash(desk_checkpoint.teacher_backbone())
