"""Diversified league training on a cyclic toy game."""

from dlt._core import *  # noqa: F401,F403
from dlt._core import __doc__  # noqa: F401

__version__ = "0.1.0"
