"""Publication-style figures from the simulation's frozen CSV/JSON files."""

__version__ = "0.1.0"

from .figures import FigureSpec, inputs_for, render
from .schema import SchemaError

__all__ = ["FigureSpec", "SchemaError", "inputs_for", "render", "__version__"]
