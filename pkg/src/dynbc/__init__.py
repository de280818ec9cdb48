"""Finite element solver for parabolic problems with dynamic boundary conditions.

The bulk field ``u`` and the boundary field ``p`` are separate unknowns,
coupled by the constraint ``p = u|_Gamma`` through a Lagrange multiplier.
"""
__version__ = "0.1.0"
