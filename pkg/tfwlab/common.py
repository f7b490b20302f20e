from __future__ import annotations
from typing import Optional, Union
import os
from pathlib import Path

OUTPUT_DIR = Path("tfw_output")
OUTPUT_ENV = "TFW_OUTPUT_DIR"


class TFWError(Exception):
    """Base class for every error raised by tfwlab."""


class NonNeutralSource(TFWError, ValueError):
    """Raised when a periodic Poisson source does not integrate to zero."""


class ShapeTooWide(TFWError, ValueError):
    """Raised when a nucleus bump would overlap itself through the torus."""


class EmptyConfiguration(TFWError, ValueError):
    """Raised when an operation needs at least one discrete nucleus."""


class TooFewPoints(TFWError, ValueError):
    """Raised when a decay curve has too few points above its floor."""


class FormatError(TFWError, ValueError):
    """Raised when a field dump cannot be decoded."""


class ConfigError(TFWError, ValueError):
    """Raised when a run configuration fails validation."""


class MaxIterExceeded(TFWError, RuntimeError):
    """Raised when the gradient flow does not reach its tolerance.

    Attributes:
        best: the iterate with the smallest residual seen before giving up.

    """

    def __init__(self, message: str, best: Optional[object] = None) -> None:
        super().__init__(message)
        self.best = best


class NegativeDensity(TFWError, RuntimeError):
    """Raised when the flow stalls after leaving the positive cone."""


class SingularOperator(TFWError, RuntimeError):
    """Raised when the linearised solve stagnates."""


def output_root(override: Optional[Union[str, Path]] = None) -> Path:
    """Resolves the output root: explicit value, then TFW_OUTPUT_DIR, then default."""
    if override is not None:
        return Path(override)

    env = os.environ.get(OUTPUT_ENV)
    if env:
        return Path(env)

    return OUTPUT_DIR


def generate_filepath(name: str, fol: Union[str, Path]) -> Path:
    """Returns a fresh run directory under fol, suffixing (1), (2), ... on clashes."""
    base_path = Path(fol) / name

    i = 1
    real_path = base_path
    while real_path.is_dir():
        real_path = Path(f"{base_path}({i})")
        i += 1

    return real_path
