"""Topic-level opinion influence: topics, opinions, influence, propagation, prediction."""

from .errors import FormatError, ToimError, ValidationError

__version__ = "0.1.0"

__all__ = ["FormatError", "ToimError", "ValidationError", "__version__"]
