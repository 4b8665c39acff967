from django_filters.rest_framework import DjangoFilterBackend
from rest_framework import filters, viewsets
from rest_framework.decorators import action
from rest_framework.response import Response

from .metrics_log import read_metrics
from .models import EvalRecord, TrainingRun
from .serializers import EvalRecordSerializer, TrainingRunSerializer


class TrainingRunViewSet(viewsets.ReadOnlyModelViewSet):
    """
    Read-only ViewSet for TrainingRun model

    Provides:
    - list: GET /api/runs/
    - retrieve: GET /api/runs/{id}/
    - metrics: GET /api/runs/{id}/metrics/
    """

    queryset = TrainingRun.objects.prefetch_related('reports')
    serializer_class = TrainingRunSerializer

    filter_backends = [DjangoFilterBackend, filters.SearchFilter, filters.OrderingFilter]
    filterset_fields = ['kind', 'mode', 'status', 'seed', 'checkpoint_hash']
    search_fields = ['output_dir', 'error']
    ordering_fields = ['created_at', 'final_loss', 'seed']
    ordering = ['-created_at']

    @action(detail=True, methods=['get'])
    def metrics(self, request, pk=None):
        """
        Custom action: the run's step-indexed metrics log
        GET /api/runs/{id}/metrics/
        """
        run = self.get_object()
        if not run.metrics_path:
            return Response([])
        return Response(read_metrics(run.metrics_path))


class EvalRecordViewSet(viewsets.ReadOnlyModelViewSet):
    """
    Read-only ViewSet for EvalRecord model
    """

    queryset = EvalRecord.objects.select_related('run')
    serializer_class = EvalRecordSerializer

    filter_backends = [DjangoFilterBackend, filters.SearchFilter, filters.OrderingFilter]
    filterset_fields = ['protocol', 'run', 'seed', 'checkpoint_hash']
    search_fields = ['dataset_id']
    ordering_fields = ['created_at', 'protocol']
    ordering = ['-created_at']
