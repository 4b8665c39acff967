from django.apps import AppConfig


class ChangedetConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "changedet"
    verbose_name = "Change detection"
