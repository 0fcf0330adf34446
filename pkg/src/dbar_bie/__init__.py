"""Boundary integral equations for the dbar-Neumann problem on the unit ball
in C^2."""
__version__ = "0.1.0"
