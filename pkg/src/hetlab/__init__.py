"""Numerical laboratory for periodically forced planar heteroclinic cycles."""

__version__ = "0.1.0"

from .model import (DerivedConstants, ForcingProfile, ModelConfig, SaddleData, derive_constants,
                    read_config, validate, write_config)

__all__ = ["DerivedConstants", "ForcingProfile", "ModelConfig", "SaddleData", "derive_constants",
           "read_config", "validate", "write_config", "__version__"]
