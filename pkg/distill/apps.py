from django.apps import AppConfig


class DistillConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "distill"
    verbose_name = "Self-distillation"
