from django.apps import AppConfig


class VfiTensorConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'vfi_tensor'
    verbose_name = 'Tensor kernels'

    def ready(self):
        # Kernel worker count follows FLAVR_THREADS unless a command overrides it
        from django.conf import settings
        from .services.parallel import set_num_workers
        set_num_workers(settings.FLAVR_THREADS)
