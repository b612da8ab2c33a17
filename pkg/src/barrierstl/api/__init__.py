"""HTTP API for the monitor service."""
