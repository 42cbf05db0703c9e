"""Spatially recurrent inverse-model control of modular soft arms.

Submodules: ``core`` (shared formulas), ``plant`` (surrogate arm),
``datagen`` (collectors and training pairs), ``nn`` (numpy LSTMs),
``control`` (trajectories and closed-loop runs), ``cli`` (pipeline).
"""
from .core import DomainError, NumericError, SaturationError
from .plant import PlantParams, planar_params, plant_init

__version__ = "0.1.0"

__all__ = ["DomainError", "NumericError", "PlantParams", "SaturationError", "planar_params", "plant_init"]
