from django.apps import AppConfig


class VfiDataConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'vfi_data'
    verbose_name = 'Frame data pipeline'
