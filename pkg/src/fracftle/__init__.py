"""Fractional-noise bifurcation laboratory."""
