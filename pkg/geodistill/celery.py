import os

from celery import Celery

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'geodistill.settings')

app = Celery('geodistill')
app.config_from_object('django.conf:settings', namespace='CELERY')

# One long-running job per worker, on its own queue
app.conf.task_routes = {'runs.tasks.*': {'queue': 'runs'}}

app.autodiscover_tasks(['runs'])
