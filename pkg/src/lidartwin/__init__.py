"""Desk-scale digital-twin LiDAR simulation and fidelity evaluation."""

__version__ = "0.1.0"
CONFIG_SCHEMA_VERSION = "1"
