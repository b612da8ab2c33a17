"""Tests for the monitor FastAPI application."""
