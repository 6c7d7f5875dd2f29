"""Minimum error entropy regression and transfer learning under covariate shift."""

__version__ = "0.1.0"
