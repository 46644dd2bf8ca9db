from django.apps import AppConfig


class PercolationConfig(AppConfig):
    name = 'percolation'
    verbose_name = 'Fractal percolation'
