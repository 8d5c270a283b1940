"""Experiment drivers: rate fitting, configs, the CLI and the acceptance suite."""

from .fitting import RateFit, fit_rate

__all__ = ["RateFit", "fit_rate"]
