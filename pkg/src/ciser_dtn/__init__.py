"""CISER epidemic model, spline fitting, contact traces and a DTN routing simulator."""

__version__ = "0.1.0"
