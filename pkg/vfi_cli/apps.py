from django.apps import AppConfig


class VfiCliConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'vfi_cli'
    verbose_name = 'FLAVR command line'
