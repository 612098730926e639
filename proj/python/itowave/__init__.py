"""Python bindings for the itowave diffusion vocoder core."""

from ._itowave import *  # noqa: F401,F403
from ._itowave import (
    ConfigError,
    DataError,
    FormatError,
    NumericalError,
    RunConfig,
    ScoreNet,
    ScoreNetConfig,
    SdeSpec,
)
