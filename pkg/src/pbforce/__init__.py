"""Poisson-Boltzmann electrostatics and dielectric boundary forces on charged membranes."""

__version__ = "0.1.0"
