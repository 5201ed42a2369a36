"""Generalized cluster-correlation expansion for central-spin decoherence."""

__version__ = "0.1.0"
