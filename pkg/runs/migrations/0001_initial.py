import django.db.models.deletion
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name='TrainingRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('kind', models.CharField(choices=[('PRETRAIN', 'Pretrain'), ('PROBE', 'Probe'), ('FINETUNE', 'Fine-tune'), ('CHANGEDET', 'Change detection')], max_length=20)),
                ('mode', models.CharField(help_text='Run mode from the [run] section', max_length=40)),
                ('status', models.CharField(choices=[('QUEUED', 'Queued'), ('RUNNING', 'Running'), ('SUCCEEDED', 'Succeeded'), ('FAILED', 'Failed')], default='QUEUED', max_length=20)),
                ('seed', models.PositiveIntegerField(default=0)),
                ('config', models.JSONField(default=dict, help_text='Validated run configuration snapshot')),
                ('output_dir', models.CharField(max_length=500)),
                ('checkpoint_path', models.CharField(blank=True, max_length=500)),
                ('checkpoint_hash', models.CharField(blank=True, db_index=True, max_length=64)),
                ('final_loss', models.FloatField(blank=True, null=True)),
                ('error', models.TextField(blank=True)),
                ('started_at', models.DateTimeField(blank=True, null=True)),
                ('finished_at', models.DateTimeField(blank=True, null=True)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('updated_at', models.DateTimeField(auto_now=True)),
            ],
            options={
                'verbose_name': 'Training run',
                'verbose_name_plural': 'Training runs',
                'ordering': ['-created_at'],
            },
        ),
        migrations.CreateModel(
            name='EvalRecord',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('protocol', models.CharField(choices=[('knn', 'KNN probe'), ('linear', 'Linear probe'), ('finetune-single', 'Fine-tune single-label'), ('finetune-multi', 'Fine-tune multi-label'), ('changedet', 'Change detection')], max_length=20)),
                ('metrics', models.JSONField(default=dict)),
                ('dataset_id', models.CharField(max_length=200)),
                ('split_sizes', models.JSONField(default=dict)),
                ('seed', models.PositiveIntegerField(default=0)),
                ('checkpoint_hash', models.CharField(blank=True, db_index=True, max_length=64)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('run', models.ForeignKey(blank=True, null=True, on_delete=django.db.models.deletion.CASCADE, related_name='reports', to='runs.trainingrun')),
            ],
            options={
                'verbose_name': 'Evaluation record',
                'verbose_name_plural': 'Evaluation records',
                'ordering': ['-created_at'],
            },
        ),
    ]
