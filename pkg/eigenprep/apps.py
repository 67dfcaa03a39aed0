from django.apps import AppConfig


class EigenprepConfig(AppConfig):
    name = 'eigenprep'
    verbose_name = 'Eigenstate preparation'
    default_auto_field = 'django.db.models.BigAutoField'
