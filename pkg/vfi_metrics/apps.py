from django.apps import AppConfig


class VfiMetricsConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'vfi_metrics'
    verbose_name = 'Quality metrics'
