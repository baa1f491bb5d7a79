"""DFIG wind farm simulation, lifted-model identification and frequency MPC."""

from ._kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
