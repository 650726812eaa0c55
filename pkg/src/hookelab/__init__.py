"""Numerical laboratory for the compressible Hookean viscoelastic system in Lagrangian form."""
