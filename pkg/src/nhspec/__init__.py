"""Non-Hermitian spectral analysis of open quantum systems."""

from . import errors, linalg, opensys, scattering, sweep, twolevel

__all__ = ["errors", "linalg", "opensys", "scattering", "sweep", "twolevel"]

__version__ = "0.1.0"
