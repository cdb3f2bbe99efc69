"""Circuit-level noise models for superconducting and neutral-atom platforms.

The superconducting model follows the SI1000 parametrisation: every channel
probability is a fixed multiple of the two-qubit depolarising probability
``p`` (single-qubit Cliffords p/10, Z-basis reset 2p, gate-layer idling
p/10, idling during measurement 2p).  The measurement error is decomposed
into a physical bit-flip ``p_b = p`` and a classification-stage soft flip
``p_s``, which compose to the overall measurement error

    p_m = p_b (1 - p_s) + p_s (1 - p_b).

The time-dependent variant replaces the fixed idling channels with
duration-scaled Pauli noise derived from T1/T2 decay, and scales the
measurement bit-flip with the readout window.

The neutral-atom model is Z-biased: two-qubit gates apply Z with p/3 and
X/Y with p/(3*bias) per gate qubit, idling during readout depolarises with
p/10, and the only measurement error channel is the soft flip.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

__all__ = [
    "NoiseConfig",
    "ChannelSpec",
    "NoiseConfigError",
    "si1000_channels",
    "na_channels",
    "channels_for",
    "idle_pauli",
    "meas_bitflip_prob",
    "compose_flip_probs",
]

SC = "SC"
NA = "NA"

# Reference readout window against which the depolarising timescale of the
# time-dependent measurement bit-flip is calibrated.
SC_REFERENCE_TAU_M = 500e-9


class NoiseConfigError(ValueError):
    """Inconsistent or unphysical noise parameters."""


def compose_flip_probs(a: float, b: float) -> float:
    """Probability that exactly one of two independent flips fires."""
    return a * (1.0 - b) + b * (1.0 - a)


@dataclass(frozen=True)
class ChannelSpec:
    """One error channel attached to an operation kind.

    ``kind`` is one of depolarize1, depolarize2, pauli_xyz, bitflip_meas,
    soft_meas, reset_flip.  ``probs`` carries the channel probabilities:
    a single total for the depolarising/flip channels, or (P_X, P_Y, P_Z)
    for pauli_xyz.  ``targets`` stays None for the per-operation templates
    produced here and is filled in when a channel is bound to a circuit
    location.
    """

    kind: str
    probs: tuple[float, ...]
    targets: tuple[int, ...] | None = None

    def __post_init__(self):
        if any(p < 0 for p in self.probs):
            raise NoiseConfigError(f"negative channel probability in {self.probs}")
        if sum(self.probs) > 1.0 + 1e-12:
            raise NoiseConfigError(f"channel probabilities sum above 1: {self.probs}")

    @property
    def total(self) -> float:
        return sum(self.probs)


@dataclass(frozen=True)
class NoiseConfig:
    """Platform noise parameters.

    Exactly one of ``ps_ratio`` / ``p_soft`` fixes the soft-flip
    probability; with neither given the ratio defaults to 1 (the LF
    regime).  Durations are seconds.  ``t2`` defaults to ``t1``.
    """

    platform: str
    p: float
    ps_ratio: float | None = None
    p_soft: float | None = None
    time_dependent: bool = False
    tau_1q: float = 20e-9
    tau_2q: float = 40e-9
    tau_r: float = 40e-9
    tau_m: float = 500e-9
    t1: float = 100e-6
    t2: float | None = None
    bias: float = 100.0

    def __post_init__(self):
        if self.platform not in (SC, NA):
            raise NoiseConfigError(f"unknown platform {self.platform!r}")
        if not (0.0 < self.p < 0.5):
            raise NoiseConfigError(f"p must be in (0, 0.5), got {self.p}")
        if self.ps_ratio is not None and self.p_soft is not None:
            raise NoiseConfigError("give ps_ratio or p_soft, not both")
        if not (0.0 < self.soft_flip_target < 0.5):
            raise NoiseConfigError(f"p_soft must be in (0, 0.5), got {self.soft_flip_target}")
        for name in ("tau_1q", "tau_2q", "tau_r", "tau_m", "t1"):
            if not (getattr(self, name) > 0):
                raise NoiseConfigError(f"{name} must be positive")
        if self.t2 is None:
            object.__setattr__(self, "t2", self.t1)
        if not (self.t2 > 0):
            raise NoiseConfigError("t2 must be positive")
        if self.t2 > 2.0 * self.t1 + 1e-15 * self.t1:
            raise NoiseConfigError("unphysical coherence times: t2 > 2*t1")
        if self.bias <= 0:
            raise NoiseConfigError("bias must be positive")

    @property
    def soft_flip_target(self) -> float:
        if self.p_soft is not None:
            return self.p_soft
        ratio = 1.0 if self.ps_ratio is None else self.ps_ratio
        return ratio * self.p

    @property
    def tau_d(self) -> float:
        """Depolarising timescale calibrated so the measurement bit-flip
        equals p at the 500 ns reference window."""
        return -SC_REFERENCE_TAU_M / math.log1p(-self.p)

    def with_tau_m(self, tau_m: float) -> "NoiseConfig":
        return replace(self, tau_m=tau_m)


def idle_pauli(tau: float, t1: float, t2: float) -> tuple[float, float, float]:
    """(P_X, P_Y, P_Z) accumulated by a qubit idling for ``tau``.

    X and Y each take a quarter of the T1 decay weight; Z takes the T2
    dephasing weight minus the damping share.
    """
    if tau < 0:
        raise NoiseConfigError("idle duration must be non-negative")
    if t2 > 2.0 * t1 + 1e-15 * t1:
        raise NoiseConfigError("unphysical coherence times: t2 > 2*t1")
    px = 0.25 * -math.expm1(-tau / t1)
    pz = 0.5 * -math.expm1(-tau / t2) - px
    if pz < -1e-15:
        raise NoiseConfigError(f"negative P_Z={pz} for tau={tau}, t1={t1}, t2={t2}")
    return px, px, max(pz, 0.0)


def meas_bitflip_prob(tau_m: float, tau_d: float) -> float:
    """Measurement bit-flip probability after a window of ``tau_m``."""
    if tau_d <= 0:
        raise NoiseConfigError("tau_d must be positive")
    if tau_m < 0:
        raise NoiseConfigError("tau_m must be non-negative")
    return -math.expm1(-tau_m / tau_d)


def si1000_channels(cfg: NoiseConfig) -> dict[str, ChannelSpec]:
    """Static SI1000 channel map keyed by operation kind.

    ``idle_gate`` applies to qubits not addressed during a gate layer and
    ``idle_meas`` to qubits not addressed while others are measured (the
    reset share of that idling is folded into the same channel).
    """
    if cfg.platform != SC:
        raise NoiseConfigError("si1000_channels needs an SC config")
    if cfg.time_dependent:
        raise NoiseConfigError("static channel map requested for a time-dependent config")
    p = cfg.p
    return {
        "cx": ChannelSpec("depolarize2", (p,)),
        "1q": ChannelSpec("depolarize1", (p / 10.0,)),
        "reset": ChannelSpec("reset_flip", (2.0 * p,)),
        "meas": ChannelSpec("bitflip_meas", (p,)),
        "meas_soft": ChannelSpec("soft_meas", (cfg.soft_flip_target,)),
        "idle_gate": ChannelSpec("depolarize1", (p / 10.0,)),
        "idle_meas": ChannelSpec("depolarize1", (2.0 * p,)),
    }


def si1000_time_dependent_channels(cfg: NoiseConfig) -> dict[str, ChannelSpec]:
    """SI1000 gate/reset rates plus duration-scaled idling and readout flip."""
    if cfg.platform != SC:
        raise NoiseConfigError("si1000_time_dependent_channels needs an SC config")
    p = cfg.p
    return {
        "cx": ChannelSpec("depolarize2", (p,)),
        "1q": ChannelSpec("depolarize1", (p / 10.0,)),
        "reset": ChannelSpec("reset_flip", (2.0 * p,)),
        "meas": ChannelSpec("bitflip_meas", (meas_bitflip_prob(cfg.tau_m, cfg.tau_d),)),
        "meas_soft": ChannelSpec("soft_meas", (cfg.soft_flip_target,)),
        "idle_1q": ChannelSpec("pauli_xyz", idle_pauli(cfg.tau_1q, cfg.t1, cfg.t2)),
        "idle_2q": ChannelSpec("pauli_xyz", idle_pauli(cfg.tau_2q, cfg.t1, cfg.t2)),
        "idle_r": ChannelSpec("pauli_xyz", idle_pauli(cfg.tau_r, cfg.t1, cfg.t2)),
        "idle_m": ChannelSpec("pauli_xyz", idle_pauli(cfg.tau_m, cfg.t1, cfg.t2)),
    }


# Neutral-atom operation durations (seconds); recorded for reporting, the
# noise channels themselves are duration-independent.
NA_TAU_1Q = 500e-9
NA_TAU_2Q = 270e-9
NA_TAU_R = 2000e-9


def na_channels(cfg: NoiseConfig) -> dict[str, ChannelSpec]:
    """Z-biased neutral-atom channel map.

    Each qubit of a two-qubit gate independently picks up Z with p/3 and
    X/Y with p/(3*bias); single-qubit gates and resets are error-free and
    data qubits idling through a readout window depolarise with p/10.
    """
    if cfg.platform != NA:
        raise NoiseConfigError("na_channels needs an NA config")
    p, b = cfg.p, cfg.bias
    biased = (p / (3.0 * b), p / (3.0 * b), p / 3.0)
    return {
        "cx": ChannelSpec("pauli_xyz", biased),
        "meas_soft": ChannelSpec("soft_meas", (cfg.soft_flip_target,)),
        "idle_meas": ChannelSpec("depolarize1", (p / 10.0,)),
    }


def channels_for(cfg: NoiseConfig) -> dict[str, ChannelSpec]:
    if cfg.platform == NA:
        return na_channels(cfg)
    if cfg.time_dependent:
        return si1000_time_dependent_channels(cfg)
    return si1000_channels(cfg)
