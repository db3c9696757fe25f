"""Convex concurrent optimization of speed, power split and battery temperature
for a fuel-cell/battery hybrid train, formulated in the space domain."""

__version__ = "0.1.0"
