"""STL, barrier synthesis, QP, learning and reporting services."""
