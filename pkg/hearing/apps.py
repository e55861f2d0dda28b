from django.apps import AppConfig


class HearingConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'hearing'
    verbose_name = 'Hearing-aid amplification'
