"""Seamless geometry and texture fusion of edited region meshes."""

__version__ = "0.1.0"
