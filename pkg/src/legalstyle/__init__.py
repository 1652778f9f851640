"""Reference-free stylistic fidelity scoring for Chinese legal text."""

__version__ = "0.1.0"

from .errors import LegalStyleError

__all__ = ["LegalStyleError", "__version__"]
