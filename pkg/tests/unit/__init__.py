"""Unit tests, laid out like ``src/barrierstl`` (core, models, services, api)."""
