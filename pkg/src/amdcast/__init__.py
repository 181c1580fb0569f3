"""Forecasting toolkit for acid-mine-drainage kinetic-test monitoring data."""

from amdcast.ingest import PARAMETERS

__version__ = "0.1.0"

__all__ = ["PARAMETERS", "__version__"]
