"""Vortex sheets on the flat torus."""
