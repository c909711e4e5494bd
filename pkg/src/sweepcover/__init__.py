"""Simulator and bound checker for distributed sweep coverage with workload memory."""

__version__ = "0.1.0"
