"""Pytest wiring: configure Django so the apps' SimpleTestCase suites collect and run."""
import os

import django

os.environ.setdefault("DJANGO_SETTINGS_MODULE", "FLAVR.settings")
django.setup()
