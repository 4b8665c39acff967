from django.urls import include, path
from rest_framework.routers import DefaultRouter

from .views import EvalRecordViewSet, TrainingRunViewSet

router = DefaultRouter()
router.register(r'runs', TrainingRunViewSet, basename='run')
router.register(r'reports', EvalRecordViewSet, basename='report')

urlpatterns = [
    path('', include(router.urls)),
]
