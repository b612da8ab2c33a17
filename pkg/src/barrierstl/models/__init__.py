"""Domain types and file schemas."""
