"""Remaining cycle time prediction for running business process cases."""

__version__ = "0.1.0"
