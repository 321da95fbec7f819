"""Invariant and multiplicative smoothing on matrix Lie groups."""
