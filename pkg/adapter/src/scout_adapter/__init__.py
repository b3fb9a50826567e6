"""Adapter service: real models behind the dronescout wire protocol."""

__version__ = "0.1.0"
