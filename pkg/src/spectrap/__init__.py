"""Spectral engineering of 1D traps whose bound-state spectra encode integer
sequences, with the driven dynamics, optimal control, and arithmetic
verification built on top.

Everything is expressed in trap units: energies in U0, lengths in
a = hbar/sqrt(m*U0), times in hbar/U0, with hbar = m = 1.
"""

__version__ = "0.1.0"
