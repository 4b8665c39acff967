import copy

from django.conf import settings
from rest_framework import serializers

from backbones.specs import BackboneSpec, FAMILIES
from geodistill.exceptions import InvalidArgument

from .models import EvalRecord, TrainingRun

MODES = [
    'pretrain-mc',
    'pretrain-tp',
    'pretrain-baseline',
    'probe',
    'finetune',
    'changedet',
]
LAYOUTS = ['classfolders', 'multilabel-manifest', 'temporal-stacks', 'pair+mask']
FINETUNE_DEFAULT_LR = {'single': 1e-3, 'multi': 1e-5}


def default(section, key):
    """Callable default read from GEODISTILL_DEFAULTS when the field is omitted."""
    def value():
        return copy.deepcopy(settings.GEODISTILL_DEFAULTS[section][key])
    return value


def unit_float(section, key):
    return serializers.FloatField(min_value=0.0, max_value=1.0, default=default(section, key))


def float_pair(section, key, min_value=0.0, max_value=None):
    return serializers.ListField(
        child=serializers.FloatField(min_value=min_value, max_value=max_value),
        min_length=2,
        max_length=2,
        default=default(section, key),
    )


def validate_ordered(value, name, allow_zero=True):
    lo, hi = value
    if lo > hi:
        raise serializers.ValidationError({name: 'Lower bound must not exceed the upper bound.'})
    if not allow_zero and lo <= 0:
        raise serializers.ValidationError({name: 'Bounds must be positive.'})
    if lo == 0 and hi == 0:
        raise serializers.ValidationError({name: 'Range (0, 0) is degenerate.'})


class StrictSerializer(serializers.Serializer):
    """Serializer that rejects keys it does not declare."""

    def to_internal_value(self, data):
        if isinstance(data, dict):
            unknown = sorted(set(data) - set(self.fields))
            if unknown:
                raise serializers.ValidationError({key: ['Unknown key.'] for key in unknown})
        return super().to_internal_value(data)


# ============================================================================
# RUN CONFIG SECTIONS
# ============================================================================

class RunSectionSerializer(StrictSerializer):
    mode = serializers.ChoiceField(choices=MODES, default='pretrain-mc')
    seed = serializers.IntegerField(min_value=0, default=default('run', 'seed'))
    output_dir = serializers.CharField(allow_blank=True, default='')
    device = serializers.RegexField(r'^(cpu|cuda(:\d+)?|mps)$', default=default('run', 'device'))
    float_width = serializers.ChoiceField(choices=[32, 64], default=default('run', 'float_width'))
    num_workers = serializers.IntegerField(min_value=0, default=default('run', 'num_workers'))
    log_every = serializers.IntegerField(min_value=1, default=default('run', 'log_every'))
    checkpoint_every = serializers.IntegerField(min_value=0, default=default('run', 'checkpoint_every'))


class BackboneSectionSerializer(StrictSerializer):
    family = serializers.ChoiceField(choices=list(FAMILIES), default=default('backbone', 'family'))
    stage_channels = serializers.ListField(
        child=serializers.IntegerField(min_value=2), min_length=4, max_length=4,
        default=default('backbone', 'stage_channels'),
    )
    depth_per_stage = serializers.ListField(
        child=serializers.IntegerField(min_value=1), min_length=4, max_length=4,
        default=default('backbone', 'depth_per_stage'),
    )
    widening_factor = serializers.IntegerField(min_value=1, default=default('backbone', 'widening_factor'))
    in_channels = serializers.IntegerField(min_value=1, default=default('backbone', 'in_channels'))
    patch_size = serializers.IntegerField(min_value=1, default=default('backbone', 'patch_size'))
    embed_dim = serializers.IntegerField(min_value=1, default=default('backbone', 'embed_dim'))
    depth = serializers.IntegerField(min_value=1, default=default('backbone', 'depth'))
    num_heads = serializers.IntegerField(min_value=1, default=default('backbone', 'num_heads'))
    native_size = serializers.IntegerField(min_value=1, default=default('backbone', 'native_size'))
    patch_resize = serializers.BooleanField(default=default('backbone', 'patch_resize'))

    def validate(self, data):
        try:
            BackboneSpec.from_dict(data)
        except InvalidArgument as exc:
            raise serializers.ValidationError({'family': str(exc)})
        return data


class HeadSectionSerializer(StrictSerializer):
    hidden_dim = serializers.IntegerField(min_value=1, default=default('head', 'hidden_dim'))
    bottleneck_dim = serializers.IntegerField(min_value=1, default=default('head', 'bottleneck_dim'))
    num_prototypes = serializers.IntegerField(min_value=2, default=default('head', 'num_prototypes'))
    num_layers = serializers.IntegerField(min_value=1, default=default('head', 'num_layers'))


class AugmentSectionSerializer(StrictSerializer):
    global_size = serializers.IntegerField(min_value=1, default=default('augment', 'global_size'))
    num_globals = serializers.IntegerField(min_value=1, default=default('augment', 'num_globals'))
    global_scale = float_pair('augment', 'global_scale', max_value=1.0)
    local_sizes = serializers.ListField(
        child=serializers.IntegerField(min_value=1), min_length=1, default=default('augment', 'local_sizes'),
    )
    local_scale = float_pair('augment', 'local_scale', max_value=1.0)
    baseline_local_size = serializers.IntegerField(min_value=1, default=default('augment', 'baseline_local_size'))
    jitter_strengths = serializers.ListField(
        child=serializers.FloatField(min_value=0.0, max_value=1.0), min_length=4, max_length=4,
        default=default('augment', 'jitter_strengths'),
    )
    jitter_prob = unit_float('augment', 'jitter_prob')
    grayscale_prob = unit_float('augment', 'grayscale_prob')
    blur_sigma = float_pair('augment', 'blur_sigma')
    global_blur_probs = float_pair('augment', 'global_blur_probs', max_value=1.0)
    local_blur_prob = unit_float('augment', 'local_blur_prob')

    def validate(self, data):
        validate_ordered(data['global_scale'], 'global_scale')
        validate_ordered(data['local_scale'], 'local_scale')
        validate_ordered(data['blur_sigma'], 'blur_sigma', allow_zero=False)
        return data


class OptimizerSectionSerializer(StrictSerializer):
    lr = serializers.FloatField(min_value=0.0, default=default('optimizer', 'lr'))
    min_lr = serializers.FloatField(min_value=0.0, default=default('optimizer', 'min_lr'))
    weight_decay = serializers.FloatField(min_value=0.0, default=default('optimizer', 'weight_decay'))
    batch_size = serializers.IntegerField(min_value=1, default=default('optimizer', 'batch_size'))
    clip_grad = serializers.FloatField(min_value=0.0, default=default('optimizer', 'clip_grad'))


class ScheduleSectionSerializer(StrictSerializer):
    epochs = serializers.IntegerField(min_value=1, default=default('schedule', 'epochs'))
    warmup_epochs = serializers.IntegerField(min_value=0, default=default('schedule', 'warmup_epochs'))
    freeze_last_layer_epochs = serializers.IntegerField(
        min_value=0, default=default('schedule', 'freeze_last_layer_epochs'),
    )


class DistillSectionSerializer(StrictSerializer):
    student_temp = serializers.FloatField(min_value=1e-6, default=default('distill', 'student_temp'))
    teacher_temp = serializers.FloatField(min_value=1e-6, default=default('distill', 'teacher_temp'))
    warmup_teacher_temp = serializers.FloatField(min_value=1e-6, default=default('distill', 'warmup_teacher_temp'))
    warmup_teacher_temp_epochs = serializers.IntegerField(
        min_value=0, default=default('distill', 'warmup_teacher_temp_epochs'),
    )
    center_momentum = unit_float('distill', 'center_momentum')
    momentum_base = unit_float('distill', 'momentum_base')
    centering = serializers.BooleanField(default=default('distill', 'centering'))


class DatasetSectionSerializer(StrictSerializer):
    root = serializers.CharField(allow_blank=True, default=default('dataset', 'root'))
    layout = serializers.ChoiceField(choices=LAYOUTS, default=default('dataset', 'layout'))
    name = serializers.CharField(allow_blank=True, default=default('dataset', 'name'))
    splits = serializers.DictField(
        child=serializers.FloatField(min_value=0.0, max_value=1.0), default=default('dataset', 'splits'),
    )
    image_size = serializers.IntegerField(min_value=0, default=default('dataset', 'image_size'))

    def validate_splits(self, value):
        if not value:
            raise serializers.ValidationError('At least one split is required.')
        if sum(value.values()) > 1.0 + 1e-9:
            raise serializers.ValidationError('Split fractions must sum to at most 1.')
        return value


class ProbeSectionSerializer(StrictSerializer):
    protocol = serializers.ChoiceField(choices=['knn', 'linear'], default=default('probe', 'protocol'))
    k = serializers.IntegerField(min_value=1, default=default('probe', 'k'))
    knn_temperature = serializers.FloatField(min_value=1e-6, default=default('probe', 'knn_temperature'))
    epochs = serializers.IntegerField(min_value=0, default=default('probe', 'epochs'))
    lr = serializers.FloatField(min_value=0.0, default=default('probe', 'lr'))
    batch_size = serializers.IntegerField(min_value=1, default=default('probe', 'batch_size'))


class FinetuneSectionSerializer(StrictSerializer):
    task = serializers.ChoiceField(choices=['single', 'multi'], default=default('finetune', 'task'))
    epochs = serializers.IntegerField(min_value=0, default=default('finetune', 'epochs'))
    lr = serializers.FloatField(min_value=0.0, allow_null=True, default=default('finetune', 'lr'))
    momentum = unit_float('finetune', 'momentum')
    batch_size = serializers.IntegerField(min_value=1, default=default('finetune', 'batch_size'))
    optimizer = serializers.ChoiceField(choices=['adam', 'adamw'], default=default('finetune', 'optimizer'))
    train_fraction = serializers.FloatField(min_value=1e-6, max_value=1.0, default=default('finetune', 'train_fraction'))
    freeze_backbone = serializers.BooleanField(default=default('finetune', 'freeze_backbone'))

    def validate(self, data):
        if data.get('lr') is None:
            data['lr'] = FINETUNE_DEFAULT_LR[data['task']]
        return data


class ChangedetSectionSerializer(StrictSerializer):
    epochs = serializers.IntegerField(min_value=0, default=default('changedet', 'epochs'))
    lr = serializers.FloatField(min_value=0.0, default=default('changedet', 'lr'))
    batch_size = serializers.IntegerField(min_value=1, default=default('changedet', 'batch_size'))
    decoder_widths = serializers.ListField(
        child=serializers.IntegerField(min_value=1), min_length=4, max_length=4,
        default=default('changedet', 'decoder_widths'),
    )
    dice_smooth = serializers.FloatField(min_value=1e-9, default=default('changedet', 'dice_smooth'))
    threshold = serializers.FloatField(min_value=0.0, max_value=1.0, default=default('changedet', 'threshold'))
    save_masks = serializers.BooleanField(default=default('changedet', 'save_masks'))


SECTION_SERIALIZERS = {
    'run': RunSectionSerializer,
    'backbone': BackboneSectionSerializer,
    'head': HeadSectionSerializer,
    'augment': AugmentSectionSerializer,
    'optimizer': OptimizerSectionSerializer,
    'schedule': ScheduleSectionSerializer,
    'distill': DistillSectionSerializer,
    'dataset': DatasetSectionSerializer,
    'probe': ProbeSectionSerializer,
    'finetune': FinetuneSectionSerializer,
    'changedet': ChangedetSectionSerializer,
}


class RunConfigSerializer(StrictSerializer):
    """Validates a whole run configuration; omitted sections and keys take their defaults."""

    run = RunSectionSerializer()
    backbone = BackboneSectionSerializer()
    head = HeadSectionSerializer()
    augment = AugmentSectionSerializer()
    optimizer = OptimizerSectionSerializer()
    schedule = ScheduleSectionSerializer()
    distill = DistillSectionSerializer()
    dataset = DatasetSectionSerializer()
    probe = ProbeSectionSerializer()
    finetune = FinetuneSectionSerializer()
    changedet = ChangedetSectionSerializer()

    def to_internal_value(self, data):
        if isinstance(data, dict):
            data = {**{name: {} for name in SECTION_SERIALIZERS}, **data}
        return super().to_internal_value(data)

    def validate(self, data):
        if data['run']['mode'] == 'changedet' and data['backbone']['family'] == 'patch-transformer':
            raise serializers.ValidationError({'backbone': 'Change detection needs a convnet backbone.'})
        if data['run']['mode'] == 'pretrain-tp' and data['dataset']['layout'] != 'temporal-stacks':
            raise serializers.ValidationError({'dataset': 'Temporal pretraining needs the temporal-stacks layout.'})
        return data


# ============================================================================
# PROVENANCE MODELS
# ============================================================================

class EvalRecordSerializer(serializers.ModelSerializer):
    """Serializer for EvalRecord model"""

    class Meta:
        model = EvalRecord
        fields = [
            'id',
            'run',
            'protocol',
            'metrics',
            'dataset_id',
            'split_sizes',
            'seed',
            'checkpoint_hash',
            'created_at',
        ]
        read_only_fields = fields


class TrainingRunSerializer(serializers.ModelSerializer):
    """Serializer for TrainingRun model"""

    reports = EvalRecordSerializer(many=True, read_only=True)
    duration_seconds = serializers.ReadOnlyField()

    class Meta:
        model = TrainingRun
        fields = [
            'id',
            'kind',
            'mode',
            'status',
            'seed',
            'config',
            'output_dir',
            'checkpoint_path',
            'checkpoint_hash',
            'final_loss',
            'error',
            'reports',
            'duration_seconds',
            'started_at',
            'finished_at',
            'created_at',
            'updated_at',
        ]
        read_only_fields = fields
