"""Shared config, exceptions and the autodiff tape."""
