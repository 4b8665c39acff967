from django.db import models


class TrainingRun(models.Model):
    """
    Provenance for one CLI or queued run: what was asked, where it wrote,
    and how it ended.
    """
    KIND_CHOICES = [
        ('PRETRAIN', 'Pretrain'),
        ('PROBE', 'Probe'),
        ('FINETUNE', 'Fine-tune'),
        ('CHANGEDET', 'Change detection'),
    ]

    STATUS_CHOICES = [
        ('QUEUED', 'Queued'),
        ('RUNNING', 'Running'),
        ('SUCCEEDED', 'Succeeded'),
        ('FAILED', 'Failed'),
    ]

    kind = models.CharField(max_length=20, choices=KIND_CHOICES)
    mode = models.CharField(max_length=40, help_text="Run mode from the [run] section")
    status = models.CharField(max_length=20, choices=STATUS_CHOICES, default='QUEUED')
    seed = models.PositiveIntegerField(default=0)
    config = models.JSONField(default=dict, help_text="Validated run configuration snapshot")
    output_dir = models.CharField(max_length=500)
    checkpoint_path = models.CharField(max_length=500, blank=True)
    checkpoint_hash = models.CharField(max_length=64, blank=True, db_index=True)
    final_loss = models.FloatField(null=True, blank=True)
    error = models.TextField(blank=True)
    started_at = models.DateTimeField(null=True, blank=True)
    finished_at = models.DateTimeField(null=True, blank=True)
    created_at = models.DateTimeField(auto_now_add=True)
    updated_at = models.DateTimeField(auto_now=True)

    class Meta:
        ordering = ['-created_at']
        verbose_name = "Training run"
        verbose_name_plural = "Training runs"

    def __str__(self):
        return f"{self.mode} #{self.pk} ({self.status})"

    @property
    def duration_seconds(self):
        if self.started_at and self.finished_at:
            return (self.finished_at - self.started_at).total_seconds()
        return None

    @property
    def metrics_path(self):
        return f"{self.output_dir}/metrics.jsonl" if self.output_dir else ''


class EvalRecord(models.Model):
    PROTOCOL_CHOICES = [
        ('knn', 'KNN probe'),
        ('linear', 'Linear probe'),
        ('finetune-single', 'Fine-tune single-label'),
        ('finetune-multi', 'Fine-tune multi-label'),
        ('changedet', 'Change detection'),
    ]

    run = models.ForeignKey(
        TrainingRun,
        on_delete=models.CASCADE,
        related_name='reports',
        null=True,
        blank=True,
    )
    protocol = models.CharField(max_length=20, choices=PROTOCOL_CHOICES)
    metrics = models.JSONField(default=dict)
    dataset_id = models.CharField(max_length=200)
    split_sizes = models.JSONField(default=dict)
    seed = models.PositiveIntegerField(default=0)
    checkpoint_hash = models.CharField(max_length=64, blank=True, db_index=True)
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        ordering = ['-created_at']
        verbose_name = "Evaluation record"
        verbose_name_plural = "Evaluation records"

    def __str__(self):
        return f"{self.protocol} on {self.dataset_id}"
