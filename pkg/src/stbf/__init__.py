"""Multi-temporal raster toolkit: spatiotemporal bilateral filtering,
intensity-based registration, linear radiometric normalization, RBF-SVM
classification with transfer learning, and accuracy reporting."""

from .errors import DivergenceError, FormatError, StbfError, ValidationError
from .filtering import FilterParams, bilateral_filter, filter_pixel, filter_stack
from .raster import LabelMask, Raster, RasterStack, load_stack, read_raster, write_raster

__all__ = [
    "DivergenceError",
    "FormatError",
    "StbfError",
    "ValidationError",
    "FilterParams",
    "bilateral_filter",
    "filter_pixel",
    "filter_stack",
    "LabelMask",
    "Raster",
    "RasterStack",
    "load_stack",
    "read_raster",
    "write_raster",
]

__version__ = "0.1.0"
