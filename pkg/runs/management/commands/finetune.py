from runs.management.base import RunCommand


class Command(RunCommand):
    help = "End-to-end fine-tuning for single-label or multi-label classification"

    mode = 'finetune'

    def add_run_arguments(self, parser):
        parser.add_argument('--task', choices=['single', 'multi'])
        parser.add_argument('--epochs', type=int)
        parser.add_argument('--train-fraction', type=float, dest='train_fraction')

    def section_overrides(self, options):
        return {
            'finetune': {
                'task': options['task'],
                'epochs': options['epochs'],
                'train_fraction': options['train_fraction'],
            },
        }
