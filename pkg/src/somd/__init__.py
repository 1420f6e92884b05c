"""SOMD-mini: method-level data parallelism lowered to a worker pool and a GPU simulator."""
from .engine import Engine, Options, load
from .errors import CompileError, SomdError
from .frontend.parser import parse

__version__ = "0.1.0"

__all__ = ["Engine", "Options", "load", "parse", "CompileError", "SomdError", "__version__"]
