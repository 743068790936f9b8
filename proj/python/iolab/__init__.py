"""Insertion-based sequence generation with soft order rewards."""

from ._iolab import *  # noqa: F401,F403
from ._iolab import __version__  # noqa: F401
