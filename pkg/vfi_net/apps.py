from django.apps import AppConfig


class VfiNetConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'vfi_net'
    verbose_name = 'FLAVR network'
