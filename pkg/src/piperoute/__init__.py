"""Routing single pipes through voxelized building rooms with planners and a PPO policy."""

from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
