"""
Global pytest fixtures shared across all test modules.

Fixtures here provide:
- Seeded generators and tiny architecture specs (fast CPU forwards)
- A tiny multi-crop layout and a matching run config
- Synthetic datasets generated into tmp_path and ingested
- API clients for the provenance endpoints
"""
import os

import django

# Configure Django settings BEFORE any Django imports
os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'geodistill.settings')
django.setup()

import pytest
import torch
from django.contrib.auth import get_user_model
from rest_framework.test import APIClient
from rest_framework_simplejwt.tokens import RefreshToken

from backbones.networks import DistillNetwork
from backbones.specs import BackboneSpec, ProjectionHeadSpec
from imaging.multicrop import MultiCropConfig
from runs.checkpoints import Checkpoint
from runs.config import RunConfig
from runs.ingest import ingest_folder
from runs.synth import KIND_LAYOUTS, synth_generate

User = get_user_model()

TINY_LOCAL_SIZES = [28, 24, 20, 16, 16, 16]


@pytest.fixture
def rng():
    """torch.Generator seeded with 0; every test gets a fresh stream."""
    return torch.Generator().manual_seed(0)


@pytest.fixture
def tiny_backbone_spec():
    """Residual backbone small enough for many CPU steps (total stride 16)."""
    return BackboneSpec(stage_channels=(8, 8, 16, 16), depth_per_stage=(1, 1, 1, 1))


@pytest.fixture
def tiny_vit_spec():
    """One-block patch transformer at 32px native size."""
    return BackboneSpec(family='patch-transformer', patch_size=8, embed_dim=16, depth=1, num_heads=2, native_size=32)


@pytest.fixture
def tiny_head_spec():
    return ProjectionHeadSpec(hidden_dim=32, bottleneck_dim=16, num_prototypes=32)


@pytest.fixture
def tiny_multicrop():
    """Two 32px globals and six locals; the last three share one size."""
    return MultiCropConfig(global_size=32, local_sizes=tuple(TINY_LOCAL_SIZES))


@pytest.fixture
def tiny_config_data(tmp_path):
    """
    Run config mapping matching the tiny fixtures.

    Usage:
        def test_something(tiny_config_data):
            config = RunConfig.from_mapping({**tiny_config_data, 'run': {...}})
    """
    return {
        'run': {'seed': 0, 'output_dir': str(tmp_path / 'run'), 'log_every': 1},
        'backbone': {'stage_channels': [8, 8, 16, 16], 'depth_per_stage': [1, 1, 1, 1]},
        'head': {'hidden_dim': 32, 'bottleneck_dim': 16, 'num_prototypes': 32},
        'augment': {'global_size': 32, 'local_sizes': TINY_LOCAL_SIZES, 'baseline_local_size': 16},
        'optimizer': {'batch_size': 4},
        'schedule': {'epochs': 2, 'warmup_epochs': 1, 'freeze_last_layer_epochs': 1},
        'distill': {'warmup_teacher_temp_epochs': 1},
        'probe': {'k': 3, 'epochs': 5, 'batch_size': 8},
        'finetune': {'epochs': 2, 'batch_size': 4},
        'changedet': {'epochs': 2, 'batch_size': 4, 'decoder_widths': [16, 8, 8, 8]},
    }


@pytest.fixture
def tiny_config(tiny_config_data):
    return RunConfig.from_mapping(tiny_config_data)


@pytest.fixture
def synth_dataset(tmp_path):
    """
    Factory generating and ingesting a synthetic dataset.

    Usage:
        def test_probe(synth_dataset):
            handle = synth_dataset('textures-4class', n=16)
    """
    def make(kind, n=8, seed=0, size=40, splits=None, **options):
        root = synth_generate(kind, n=n, seed=seed, path=tmp_path / 'data' / f"{kind}-{seed}-{n}", size=size, **options)
        return ingest_folder(root, KIND_LAYOUTS[kind], splits=splits, seed=seed)
    return make


@pytest.fixture
def api_client():
    """DRF's APIClient for requests against the provenance API."""
    return APIClient()


@pytest.fixture
def user(db):
    return User.objects.create_user(username='analyst', email='analyst@example.com', password='testpass123')


@pytest.fixture
def authenticated_client(api_client, user):
    """API client logged in through force_authenticate."""
    api_client.force_authenticate(user=user)
    return api_client


@pytest.fixture
def authenticated_client_with_token(api_client, user):
    """API client sending a real JWT access token."""
    refresh = RefreshToken.for_user(user)
    api_client.credentials(HTTP_AUTHORIZATION=f'Bearer {refresh.access_token}')
    return api_client


@pytest.fixture
def tiny_checkpoint(tmp_path, tiny_backbone_spec, tiny_head_spec):
    """Saved and reloaded checkpoint of a freshly initialised tiny network."""
    torch.manual_seed(0)
    network = DistillNetwork(tiny_backbone_spec, tiny_head_spec)
    path = tmp_path / 'tiny.zip'
    Checkpoint.from_networks(network, student=network, center=torch.zeros(tiny_head_spec.num_prototypes)).save(path)
    return Checkpoint.load(path)


@pytest.fixture
def desk_checkpoint(tmp_path, tiny_head_spec):
    """Checkpoint of a fresh residual backbone at the default desk-scale widths."""
    torch.manual_seed(0)
    network = DistillNetwork(BackboneSpec(), tiny_head_spec)
    path = tmp_path / 'desk.zip'
    Checkpoint.from_networks(network, student=network, center=torch.zeros(tiny_head_spec.num_prototypes)).save(path)
    return Checkpoint.load(path)
