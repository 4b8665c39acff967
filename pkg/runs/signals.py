import logging

from django.db.models.signals import post_save, pre_save
from django.dispatch import receiver

from .models import TrainingRun

logger = logging.getLogger(__name__)


def get_old_instance(model_class, instance):
    """Get the old instance from database before save"""
    try:
        return model_class.objects.get(pk=instance.pk)
    except model_class.DoesNotExist:
        return None


@receiver(pre_save, sender=TrainingRun)
def training_run_pre_save(sender, instance, **kwargs):
    """Store old status before a TrainingRun is saved"""
    instance._old_status = None
    if instance.pk:
        old_instance = get_old_instance(TrainingRun, instance)
        if old_instance:
            instance._old_status = old_instance.status


@receiver(post_save, sender=TrainingRun)
def training_run_post_save(sender, instance, created, **kwargs):
    """Log creation and every status transition"""
    if created:
        logger.info("Run %s (%s) created as %s", instance.pk, instance.mode, instance.status)
        return
    old_status = getattr(instance, '_old_status', None)
    if old_status and old_status != instance.status:
        if instance.status == 'FAILED':
            logger.warning("Run %s: %s -> FAILED (%s)", instance.pk, old_status, instance.error)
        else:
            logger.info("Run %s: %s -> %s", instance.pk, old_status, instance.status)
