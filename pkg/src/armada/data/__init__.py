"""Bundled calibration tables."""
