"""Benchmarks, privacy audits and the Monte Carlo oracle."""
