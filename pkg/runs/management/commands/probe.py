from runs.management.base import RunCommand


class Command(RunCommand):
    help = "Nearest-neighbour or linear probe on frozen checkpoint features"

    mode = 'probe'

    def add_run_arguments(self, parser):
        parser.add_argument('--protocol', choices=['knn', 'linear'])
        parser.add_argument('--k', type=int)

    def section_overrides(self, options):
        return {'probe': {'protocol': options['protocol'], 'k': options['k']}}
