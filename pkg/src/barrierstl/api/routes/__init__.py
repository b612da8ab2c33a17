"""Monitor service route handlers."""
