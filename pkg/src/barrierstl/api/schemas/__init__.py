"""Request and response bodies of the monitor service."""
