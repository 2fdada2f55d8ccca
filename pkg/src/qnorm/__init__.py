"""Normalized solutions of -Δu - Δ_q u + λu = g(u) on radial grids."""

__version__ = "0.1.0"
