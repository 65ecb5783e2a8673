"""Closed-form analysis and similarity estimators."""
