"""
Tests for run orchestration, the Celery task and the status signals.
"""

import json
from unittest.mock import patch

import pytest

from geodistill.exceptions import ConfigError, InvalidState
from probing.reports import REPORT_NAME
from runs.config import RunConfig
from runs.locking import output_lock
from runs.models import EvalRecord, TrainingRun
from runs.services import create_run, execute_run, kind_for_mode
from runs.tasks import execute_run as execute_run_task
from runs.tests.factories import TrainingRunFactory

SPLITS = {'train': 0.5, 'test': 0.5}


@pytest.fixture
def probe_config(tiny_config_data, synth_dataset):
    """Probe config over an 8-image texture dataset split in half."""
    handle = synth_dataset('textures-4class', n=8)
    data = {
        **tiny_config_data,
        'run': {**tiny_config_data['run'], 'mode': 'probe'},
        'dataset': {'root': str(handle.root), 'layout': 'classfolders', 'splits': SPLITS},
    }
    return RunConfig.from_mapping(data)


@pytest.fixture
def checkpoint_path(tiny_checkpoint, tmp_path):
    return tmp_path / 'tiny.zip'


# ============================================================================
# CREATE RUN TESTS
# ============================================================================

@pytest.mark.django_db
class TestCreateRun:
    """Test suite for create_run"""

    @pytest.mark.parametrize('mode,kind', [
        ('pretrain-mc', 'PRETRAIN'),
        ('pretrain-tp', 'PRETRAIN'),
        ('probe', 'PROBE'),
        ('finetune', 'FINETUNE'),
        ('changedet', 'CHANGEDET'),
    ])
    def test_kind_for_mode(self, mode, kind):
        """Test every mode maps to one run kind"""
        assert kind_for_mode(mode) == kind

    def test_records_queued_run(self, probe_config, checkpoint_path):
        """Test a new run is QUEUED with the config snapshot"""
        run = create_run(probe_config, checkpoint_path)

        assert run.status == 'QUEUED'
        assert run.kind == 'PROBE'
        assert run.config == probe_config.snapshot()
        assert run.output_dir == str(probe_config.output_dir)

    def test_evaluation_needs_checkpoint(self, probe_config):
        """Test evaluation modes refuse to start without a checkpoint"""
        with pytest.raises(ConfigError):
            create_run(probe_config)

        assert not TrainingRun.objects.exists()


# ============================================================================
# EXECUTE RUN TESTS
# ============================================================================

@pytest.mark.django_db
@pytest.mark.integration
class TestExecuteRun:
    """Test suite for execute_run"""

    def test_probe_run_succeeds(self, probe_config, checkpoint_path, tiny_checkpoint):
        """Test a probe run ends SUCCEEDED with a stored report"""
        run = create_run(probe_config, checkpoint_path)

        execute_run(run)

        run.refresh_from_db()
        assert run.status == 'SUCCEEDED'
        assert run.started_at <= run.finished_at
        assert run.checkpoint_hash == tiny_checkpoint.content_hash
        record = EvalRecord.objects.get(run=run)
        assert record.protocol == 'knn'
        assert record.split_sizes == {'train': 4, 'test': 4}
        saved = json.loads((probe_config.output_dir / REPORT_NAME).read_text())
        assert saved['metrics'] == record.metrics

    def test_failure_recorded(self, tiny_config_data, synth_dataset, checkpoint_path):
        """Test a probe on a multi-label dataset ends FAILED with the error kept"""
        handle = synth_dataset('multilabel-motifs', n=8)
        config = RunConfig.from_mapping({
            **tiny_config_data,
            'run': {**tiny_config_data['run'], 'mode': 'probe'},
            'dataset': {'root': str(handle.root), 'layout': 'multilabel-manifest', 'splits': SPLITS},
        })
        run = create_run(config, checkpoint_path)

        with pytest.raises(ConfigError):
            execute_run(run)

        run.refresh_from_db()
        assert run.status == 'FAILED'
        assert 'single-label' in run.error
        assert run.finished_at is not None

    def test_locked_output_dir(self, probe_config, checkpoint_path):
        """Test a second writer to one output directory fails"""
        run = create_run(probe_config, checkpoint_path)

        with output_lock(probe_config.output_dir):
            with pytest.raises(InvalidState):
                execute_run(run)

        run.refresh_from_db()
        assert run.status == 'FAILED'
        assert not EvalRecord.objects.filter(run=run).exists()

    def test_missing_dataset_root(self, tiny_config_data, checkpoint_path):
        """Test an evaluation run without dataset.root is a config error"""
        config = RunConfig.from_mapping({**tiny_config_data, 'run': {**tiny_config_data['run'], 'mode': 'probe'}})
        run = create_run(config, checkpoint_path)

        with pytest.raises(ConfigError, match='dataset.root'):
            execute_run(run)


# ============================================================================
# CELERY TASK TESTS
# ============================================================================

@pytest.mark.django_db
class TestExecuteRunTask:
    """Test suite for the execute_run Celery task"""

    def test_unknown_run(self):
        """Test a missing run id is reported, not raised"""
        assert execute_run_task(99999) == 'TrainingRun with id 99999 not found'

    def test_run_not_queued(self):
        """Test a finished run is not executed again"""
        run = TrainingRunFactory(status='SUCCEEDED')

        assert execute_run_task(run.id) == f'TrainingRun {run.id} is SUCCEEDED, not QUEUED'

    @pytest.mark.integration
    def test_executes_queued_run(self, probe_config, checkpoint_path):
        """Test the worker runs a queued probe to completion"""
        run = create_run(probe_config, checkpoint_path)

        assert execute_run_task(run.id) == f'Run {run.id} succeeded'
        run.refresh_from_db()
        assert run.status == 'SUCCEEDED'

    def test_failure_returned(self, tiny_config_data, checkpoint_path):
        """Test a failing run returns its error message"""
        config = RunConfig.from_mapping({**tiny_config_data, 'run': {**tiny_config_data['run'], 'mode': 'probe'}})
        run = create_run(config, checkpoint_path)

        message = execute_run_task(run.id)

        assert message.startswith(f'Run {run.id} failed')
        run.refresh_from_db()
        assert run.status == 'FAILED'


# ============================================================================
# SIGNAL TESTS
# ============================================================================

@pytest.mark.django_db
class TestRunSignals:
    """Test suite for the TrainingRun status signals"""

    def test_creation_logged(self):
        """Test creating a run logs it once"""
        with patch('runs.signals.logger') as logger:
            run = TrainingRunFactory(status='QUEUED')

        logger.info.assert_called_once_with("Run %s (%s) created as %s", run.pk, run.mode, 'QUEUED')

    def test_transition_logged(self):
        """Test a status change logs old and new status"""
        run = TrainingRunFactory(status='QUEUED')

        with patch('runs.signals.logger') as logger:
            run.status = 'RUNNING'
            run.save()

        logger.info.assert_called_once_with("Run %s: %s -> %s", run.pk, 'QUEUED', 'RUNNING')

    def test_failure_logged_as_warning(self):
        """Test FAILED transitions are warnings carrying the error"""
        run = TrainingRunFactory(status='RUNNING')

        with patch('runs.signals.logger') as logger:
            run.status = 'FAILED'
            run.error = 'out of memory'
            run.save()

        logger.warning.assert_called_once_with("Run %s: %s -> FAILED (%s)", run.pk, 'RUNNING', 'out of memory')
        logger.info.assert_not_called()

    def test_save_without_change_is_silent(self):
        """Test re-saving with the same status logs nothing"""
        run = TrainingRunFactory(status='SUCCEEDED')

        with patch('runs.signals.logger') as logger:
            run.final_loss = 0.5
            run.save()

        logger.info.assert_not_called()
        logger.warning.assert_not_called()
