"""softqec: soft-information decoding for surface and bivariate-bicycle codes.

The package simulates quantum-memory experiments in which every stabiliser
measurement carries an 8-bit posterior ("soft value") alongside the hardened
bit, and compares decoders that exploit that information against their
hard-information baselines.
"""

from softqec.readout import (
    NaReadoutModel,
    NaReadoutParams,
    ScReadoutModel,
    ScReadoutParams,
    SoftShotBatch,
    SoftValue,
)
from softqec.noise import ChannelSpec, NoiseConfig

__all__ = [
    "NaReadoutModel",
    "NaReadoutParams",
    "ScReadoutModel",
    "ScReadoutParams",
    "SoftShotBatch",
    "SoftValue",
    "ChannelSpec",
    "NoiseConfig",
]

__version__ = "0.1.0"
