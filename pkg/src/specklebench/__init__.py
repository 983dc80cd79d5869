"""Laser speckle reduction benchmark toolkit.

Images are handled as ``float64`` numpy arrays of shape ``(H, W, 3)`` with
intensities in ``[0, 1]``; 8-bit files are mapped ``v / 255`` on load.
"""

__version__ = "0.1.0"


class SpeckleBenchError(Exception):
    """Base class for errors raised by this package."""


class DataError(SpeckleBenchError, ValueError):
    """Bad or undecodable input data (CLI exit code 2)."""


class NumericalFault(SpeckleBenchError, FloatingPointError):
    """Non-finite values during training or optimisation (CLI exit code 3)."""
