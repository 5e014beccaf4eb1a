"""Simulation toolkit for spin-wave photon-echo quantum memories with dynamical decoupling."""

__version__ = "0.1.0"

from . import echosim, holeburn, model, photonics, rffield, spectral  # noqa: E402,F401
from .errors import NlpeError  # noqa: E402,F401
