from runs.management.base import RunCommand


class Command(RunCommand):
    help = "Self-distillation pretraining (multi-crop, temporal positives or fixed-size baseline)"

    needs_checkpoint = False

    def add_run_arguments(self, parser):
        parser.add_argument('--mode', choices=['mc', 'tp', 'baseline'], help='defaults to run.mode, else mc')
        parser.add_argument('--epochs', type=int)
        parser.add_argument('--batch-size', type=int, dest='batch_size')

    def run_mode(self, options):
        return f"pretrain-{options['mode']}" if options['mode'] else None

    def section_overrides(self, options):
        return {
            'schedule': {'epochs': options['epochs']},
            'optimizer': {'batch_size': options['batch_size']},
        }

    def build_config(self, options):
        config = super().build_config(options)
        if not config.mode.startswith('pretrain-'):
            config = config.replace(run={'mode': 'pretrain-mc'})
        return config

    def report(self, run):
        self.stdout.write(f"checkpoint {run.checkpoint_path}")
        self.stdout.write(f"sha256 {run.checkpoint_hash}")
        self.stdout.write(f"final loss {run.final_loss:.6f}")
        super().report(run)
