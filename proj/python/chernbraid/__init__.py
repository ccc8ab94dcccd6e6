"""Python bindings for the chernbraid transport library."""

from ._chernbraid import *  # noqa: F401,F403
from ._chernbraid import __doc__  # noqa: F401
