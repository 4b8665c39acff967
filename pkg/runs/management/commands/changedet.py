from runs.management.base import RunCommand


class Command(RunCommand):
    help = "Train a change-detection U-Net decoder on a frozen checkpoint encoder"

    mode = 'changedet'

    def add_run_arguments(self, parser):
        parser.add_argument('--epochs', type=int)
        parser.add_argument('--no-masks', action='store_true', dest='no_masks', help='skip writing predicted masks')

    def section_overrides(self, options):
        return {
            'changedet': {
                'epochs': options['epochs'],
                'save_masks': False if options['no_masks'] else None,
            },
        }
