"""Offline multi-camera vehicle tracking guided by crossroad zones."""

__version__ = "0.1.0"
