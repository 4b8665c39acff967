"""
Shared plumbing for the training and evaluation commands.

Config errors exit with status 2, every other failure with status 1.
"""
from __future__ import annotations

from django.core.management.base import BaseCommand, CommandError

from geodistill.exceptions import ConfigError, GeoDistillError
from runs.config import RunConfig, format_override
from runs.services import create_run, execute_run
from runs.tasks import execute_run as execute_run_task


def config_error(exc: Exception) -> CommandError:
    return CommandError(str(exc), returncode=2)


def runtime_error(exc: Exception) -> CommandError:
    return CommandError(str(exc), returncode=1)


class RunCommand(BaseCommand):
    """Base for commands that execute one recorded run."""

    mode: str = ''
    needs_checkpoint = True

    def add_arguments(self, parser):
        parser.add_argument('--config', help='TOML run config; omitted keys take their defaults')
        parser.add_argument('--seed', type=int)
        parser.add_argument('--device', help='cpu, cuda, cuda:N or mps')
        parser.add_argument('--float-width', type=int, choices=[32, 64], dest='float_width')
        parser.add_argument('--output-dir', dest='output_dir')
        parser.add_argument('--dataset', help='dataset root folder (dataset.root)')
        parser.add_argument('--layout', help='dataset layout (dataset.layout)')
        parser.add_argument(
            '--set', action='append', default=[], dest='overrides', metavar='SECTION.KEY=VALUE',
            help='override one config value; repeatable',
        )
        parser.add_argument('--queue', action='store_true', help='enqueue on the Celery worker instead of running inline')
        if self.needs_checkpoint:
            parser.add_argument('--checkpoint', required=True, help='pretrained checkpoint archive')
        self.add_run_arguments(parser)

    def add_run_arguments(self, parser):
        pass

    def run_mode(self, options) -> str | None:
        return self.mode

    def section_overrides(self, options) -> dict:
        """Command-specific flags as ``{section: {key: value}}``; None values are skipped."""
        return {}

    def build_config(self, options) -> RunConfig:
        sections = {'dataset': {'root': options['dataset'], 'layout': options['layout']}}
        for section, values in self.section_overrides(options).items():
            sections.setdefault(section, {}).update(values)
        overrides = list(options['overrides'])
        for section, values in sections.items():
            overrides.extend(format_override(section, key, value) for key, value in values.items() if value is not None)
        return RunConfig.load(
            options['config'],
            overrides,
            mode=self.run_mode(options),
            seed=options['seed'],
            device=options['device'],
            float_width=options['float_width'],
            output_dir=options['output_dir'],
        )

    def handle(self, *args, **options):
        try:
            config = self.build_config(options)
            run = create_run(config, options.get('checkpoint') or '')
        except ConfigError as exc:
            raise config_error(exc) from exc

        if options['queue']:
            execute_run_task.delay(run.id)
            self.stdout.write(f"Queued run {run.id} ({run.mode}) writing to {run.output_dir}")
            return

        try:
            execute_run(run)
        except ConfigError as exc:
            raise config_error(exc) from exc
        except GeoDistillError as exc:
            raise runtime_error(exc) from exc
        self.report(run)

    def report(self, run):
        for record in run.reports.all():
            self.stdout.write(f"{record.protocol} on {record.dataset_id}:")
            for name, value in sorted(record.metrics.items()):
                self.stdout.write(f"  {name} = {value:.4f}")
        self.stdout.write(self.style.SUCCESS(f"Run {run.id} {run.status.lower()}; outputs in {run.output_dir}"))
