"""Scoring and generation pipelines for research-paper peer reviews."""

from .errors import ReviewEvalError

__version__ = "0.1.0"

__all__ = ["ReviewEvalError", "__version__"]
