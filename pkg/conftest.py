import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'percolab.settings')
django.setup()
