import json

from django.core.management.base import BaseCommand, CommandError

from geodistill.exceptions import CheckpointError, IngestionError
from runs.checkpoints import Checkpoint
from runs.ingest import LAYOUTS, ingest_folder


class Command(BaseCommand):
    help = "Print a checkpoint's specs, step and hash, or a dataset folder's summary"

    def add_arguments(self, parser):
        target = parser.add_mutually_exclusive_group(required=True)
        target.add_argument('--checkpoint', help='checkpoint archive')
        target.add_argument('--dataset', help='dataset root folder')
        parser.add_argument('--layout', choices=LAYOUTS, default='classfolders')

    def handle(self, *args, **options):
        if options['checkpoint']:
            self.inspect_checkpoint(options['checkpoint'])
        else:
            self.inspect_dataset(options['dataset'], options['layout'])

    def inspect_checkpoint(self, path):
        try:
            checkpoint = Checkpoint.load(path)
        except CheckpointError as exc:
            raise CommandError(str(exc), returncode=1) from exc
        summary = {
            'backbone': checkpoint.backbone_spec.to_dict(),
            'head': checkpoint.head_spec.to_dict(),
            'step': checkpoint.step,
            'float_width': checkpoint.float_width,
            'has_student': checkpoint.student is not None,
            'provenance': checkpoint.provenance,
            'sha256': checkpoint.content_hash,
        }
        self.stdout.write(json.dumps(summary, sort_keys=True, indent=2))

    def inspect_dataset(self, root, layout):
        try:
            handle = ingest_folder(root, layout)
        except IngestionError as exc:
            raise CommandError(str(exc), returncode=1) from exc
        summary = {
            'dataset_id': handle.dataset_id,
            'layout': handle.layout,
            'items': len(handle),
            'images': len(handle.image_paths()),
            'class_names': list(handle.class_names),
            'num_labels': handle.num_labels,
        }
        self.stdout.write(json.dumps(summary, sort_keys=True, indent=2))
