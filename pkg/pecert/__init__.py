"""Device-independent randomness certification with probability estimation."""

from pecert.__version__ import __version__  # noqa: F401
