"""Benchmark toolkit for flow-based network intrusion detection on GeNIS-style data."""

__version__ = "0.1.0"
