import logging

from celery import shared_task

from geodistill.exceptions import GeoDistillError

from .models import TrainingRun
from .services import execute_run as run_inline

logger = logging.getLogger(__name__)


@shared_task
def execute_run(run_id):
    """
    Execute a queued TrainingRun in a worker.

    Args:
        run_id: primary key of a TrainingRun created by ``create_run``
    """
    try:
        run = TrainingRun.objects.get(id=run_id)
    except TrainingRun.DoesNotExist:
        return f"TrainingRun with id {run_id} not found"

    if run.status != 'QUEUED':
        return f"TrainingRun {run_id} is {run.status}, not QUEUED"

    try:
        run_inline(run)
    except GeoDistillError as exc:
        logger.error("Run %s failed: %s", run_id, exc)
        return f"Run {run_id} failed: {exc}"
    return f"Run {run_id} succeeded"
