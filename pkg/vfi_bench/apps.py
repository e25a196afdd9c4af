from django.apps import AppConfig


class VfiBenchConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'vfi_bench'
    verbose_name = 'FLAVR benchmarks'
