"""Version information for pecert."""

__version__ = "0.1.0"
__author__ = "pecert developers"
__license__ = "MIT"
