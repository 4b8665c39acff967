from django.apps import AppConfig


class BackbonesConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "backbones"
    verbose_name = "Backbones"
