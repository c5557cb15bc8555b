"""Rotation averaging with a learned graph optimizer.

The numeric core is plain numpy: SO(3) utilities, view-graph I/O, a
synthetic benchmark generator, classical baselines, a small autodiff
engine and the recurrent message-passing optimizer built on it.
"""

from .errors import RagoError
from .viewgraph import ViewGraph, load, save

__version__ = "0.1.0"

__all__ = ["RagoError", "ViewGraph", "load", "save", "__version__"]
