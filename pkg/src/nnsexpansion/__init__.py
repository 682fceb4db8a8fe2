"""Vertex, edge and robust expansion of metric graphs and the cell-probe
experiments built on them."""

__version__ = "0.1.0"
