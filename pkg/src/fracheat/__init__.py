"""Numerical companion for the fractional heat equation with Zygmund-class initial data.

Modules: ``gridfn`` (torus grids and sampled profiles), ``rearrange`` (f*, f**),
``zygmund`` (log-weighted Lorentz norms), ``semigroup`` (spectral propagator),
``interp`` (K-functional, Hardy and log-integral checks), ``solver`` (Duhamel
and Picard iteration) and ``harness`` (configs, CLI, acceptance suite).
"""

__version__ = "0.1.0"
