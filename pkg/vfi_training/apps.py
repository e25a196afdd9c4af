from django.apps import AppConfig


class VfiTrainingConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'vfi_training'
    verbose_name = 'FLAVR training'
