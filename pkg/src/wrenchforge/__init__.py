"""Wrench capability analysis and redundancy optimization for floating-base manipulators."""
from .geometry import PlanarPose, SpatialPose
from .model import SystemModel, load_model

__version__ = "0.1.0"

__all__ = ["PlanarPose", "SpatialPose", "SystemModel", "load_model", "__version__"]
