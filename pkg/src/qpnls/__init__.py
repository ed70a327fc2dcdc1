"""Quasi-periodic NLS solutions by a Newton iteration on Fourier lattices."""
