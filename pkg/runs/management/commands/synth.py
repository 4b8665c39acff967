from django.core.management.base import BaseCommand, CommandError

from geodistill.exceptions import InvalidArgument
from runs.synth import KINDS, synth_generate


class Command(BaseCommand):
    help = "Generate a deterministic synthetic dataset"

    def add_arguments(self, parser):
        parser.add_argument('--kind', required=True, choices=KINDS)
        parser.add_argument('--n', type=int, required=True, help='number of instances')
        parser.add_argument('--seed', type=int, default=0)
        parser.add_argument('--out', required=True, help='output folder')
        parser.add_argument('--size', type=int, default=64, help='image side in pixels')
        parser.add_argument('--views', type=int, default=5, help='views per temporal stack')

    def handle(self, *args, **options):
        try:
            root = synth_generate(
                options['kind'], options['n'], options['seed'], options['out'], size=options['size'], views=options['views']
            )
        except InvalidArgument as exc:
            raise CommandError(str(exc), returncode=2) from exc
        except OSError as exc:
            raise CommandError(str(exc), returncode=1) from exc
        self.stdout.write(self.style.SUCCESS(f"Wrote {options['n']} {options['kind']} instances to {root}"))
