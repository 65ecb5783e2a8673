"""Privatization mechanisms and noise calibration."""
