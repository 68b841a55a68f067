"""Figure rendering for bridgemark experiment CSVs."""

__version__ = "0.1.0"

from .io import SchemaError
from .render import KINDS, render
