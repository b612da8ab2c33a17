"""Tests for the health and monitor routers."""
