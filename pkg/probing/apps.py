from django.apps import AppConfig


class ProbingConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "probing"
    verbose_name = "Probing and fine-tuning"
