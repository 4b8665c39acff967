from django.contrib import admin

from .models import EvalRecord, TrainingRun


class EvalRecordInline(admin.TabularInline):
    model = EvalRecord
    extra = 0
    fields = ['protocol', 'dataset_id', 'metrics', 'seed']
    readonly_fields = fields


@admin.register(TrainingRun)
class TrainingRunAdmin(admin.ModelAdmin):
    """Admin configuration for TrainingRun model"""

    list_display = [
        'id',
        'mode',
        'status',
        'seed',
        'final_loss',
        'short_hash',
        'duration',
        'created_at',
    ]

    list_filter = ['kind', 'mode', 'status', 'created_at']
    search_fields = ['output_dir', 'checkpoint_hash', 'error']
    inlines = [EvalRecordInline]

    fieldsets = (
        ('Run', {
            'fields': ('kind', 'mode', 'status', 'seed', 'config')
        }),
        ('Outputs', {
            'fields': ('output_dir', 'checkpoint_path', 'checkpoint_hash', 'final_loss', 'error')
        }),
        ('Timing', {
            'fields': ('started_at', 'finished_at')
        }),
    )

    readonly_fields = ['created_at', 'updated_at']

    def short_hash(self, obj):
        return obj.checkpoint_hash[:12]

    short_hash.short_description = 'Checkpoint'

    def duration(self, obj):
        seconds = obj.duration_seconds
        return f"{seconds:.1f}s" if seconds is not None else '-'

    duration.short_description = 'Duration'


@admin.register(EvalRecord)
class EvalRecordAdmin(admin.ModelAdmin):
    """Admin configuration for EvalRecord model"""

    list_display = ['protocol', 'dataset_id', 'headline', 'seed', 'run', 'created_at']
    list_filter = ['protocol', 'created_at']
    search_fields = ['dataset_id', 'checkpoint_hash']
    readonly_fields = ['created_at']

    def headline(self, obj):
        for name in ('top1', 'map', 'pixel_f1'):
            if name in obj.metrics:
                return f"{name} {obj.metrics[name]:.4f}"
        return '-'

    headline.short_description = 'Headline metric'
