"""Sketch serialization and run reports."""
