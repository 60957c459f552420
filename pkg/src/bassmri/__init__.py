"""Data-driven learning of Cartesian k-space sampling patterns for parallel MRI."""

from .core import (
    BassError,
    DataFormatError,
    Dataset,
    GridMismatchError,
    ImageVolume,
    KSpaceGrid,
    MultiCoilKSpace,
    NumericalError,
    SamplingPattern,
    acceleration_factor,
    apply_sampling,
    embed_sampled,
    normalize,
)

__version__ = "0.1.0"
