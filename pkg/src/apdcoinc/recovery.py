"""Recovery physics of a passively quenched Geiger-mode APD.

All functions take elapsed time ``t`` since the last avalanche (seconds) or an
instantaneous excess voltage (volts) and accept scalars or numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

import numpy as np
from scipy.special import ndtr

EXPONENTIAL = "exponential"
STEPWISE = "stepwise"
RECOVERY_KINDS = (EXPONENTIAL, STEPWISE)


@dataclass(frozen=True)
class DetectorParams:
    """Per-device constants of the passive-quenching model.

    Breakdown voltage is not stored; everything is expressed in excess
    voltage. ``dead_time`` is only used by the stepwise recovery variant.
    """

    v_e_set: float = 15.0
    rc_time: float = 1e-6
    v_characteristic: float = 5.0
    pulse_gain: float = 0.01
    v_cld: float = 0.64
    sigma_rel: float = 0.15
    recovery_kind: str = EXPONENTIAL
    dead_time: float | None = None

    def __post_init__(self):
        for name in ("v_e_set", "rc_time", "v_characteristic", "pulse_gain"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ValueError(f"{name} must be positive and finite, got {value!r}")
        if not (self.v_cld >= 0 and math.isfinite(self.v_cld)):
            raise ValueError(f"v_cld must be >= 0, got {self.v_cld!r}")
        if not 0 < self.sigma_rel < 1:
            raise ValueError(f"sigma_rel must lie in (0, 1), got {self.sigma_rel!r}")
        if self.recovery_kind not in RECOVERY_KINDS:
            raise ValueError(f"recovery_kind must be one of {RECOVERY_KINDS}, got {self.recovery_kind!r}")
        if self.recovery_kind == STEPWISE:
            if self.dead_time is None or not self.dead_time > 0:
                raise ValueError("stepwise recovery needs a positive dead_time")
        if self.threshold_voltage >= self.v_e_set:
            raise ValueError(
                f"discriminator level {self.v_cld} V is never reached: needs excess voltage "
                f"{self.threshold_voltage:.6g} V >= v_e_set {self.v_e_set} V"
            )

    @property
    def threshold_voltage(self) -> float:
        """Excess voltage at which the mean pulse height equals ``v_cld``."""
        return math.sqrt(self.v_cld / self.pulse_gain)

    @property
    def stepwise(self) -> bool:
        return self.recovery_kind == STEPWISE

    def with_(self, **changes) -> "DetectorParams":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "DetectorParams":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown detector parameter(s): {sorted(unknown)}")
        return cls(**data)


def _check_nonnegative(x, name):
    arr = np.asarray(x, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr < 0):
        raise ValueError(f"{name} must be >= 0")
    return arr


def _out(arr):
    return float(arr) if arr.ndim == 0 else arr


def excess_voltage(t, p: DetectorParams):
    """V_e(t) = V_e,set (1 - exp(-t/RC)); discharge is instantaneous."""
    t = _check_nonnegative(t, "elapsed time")
    return _out(-p.v_e_set * np.expm1(-t / p.rc_time))


def avalanche_probability(v_e, p: DetectorParams):
    """Probability that a carrier triggers an avalanche at excess voltage ``v_e``."""
    v_e = _check_nonnegative(v_e, "excess voltage")
    return _out(-np.expm1(-v_e / p.v_characteristic))


def pulse_height_mean(v_e, p: DetectorParams):
    v_e = _check_nonnegative(v_e, "excess voltage")
    return _out(p.pulse_gain * v_e**2)


def threshold_crossing_time(p: DetectorParams) -> float:
    """Time after an avalanche at which the mean pulse height reaches ``v_cld``."""
    return -p.rc_time * math.log1p(-p.threshold_voltage / p.v_e_set)


def sensing_width(p: DetectorParams) -> float:
    """Time width of the discriminator transition at t0.

    sigma_t = sigma_rel * v_cld / (d/dt A V_e(t)^2 at t0): the pulse-height
    spread at threshold mapped through the slope of the mean pulse height.
    Zero when v_cld is 0.
    """
    v_th = p.threshold_voltage
    if v_th == 0.0:
        return 0.0
    slope = 2.0 * p.pulse_gain * v_th * (p.v_e_set - v_th) / p.rc_time
    return p.sigma_rel * p.v_cld / slope


def _crossing_probability(mean, p: DetectorParams):
    """P(height >= v_cld) for Gaussian heights with sd = sigma_rel * mean."""
    mean = np.asarray(mean, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = (1.0 - p.v_cld / mean) / p.sigma_rel
    return np.where(mean > 0, ndtr(z), 0.0)


def sense_probability(t, p: DetectorParams):
    """Probability that the pulse of an avalanche at elapsed time ``t`` crosses the discriminator.

    Pulse heights are Gaussian about A V_e(t)^2 with relative spread
    sigma_rel, so this is a smoothed step that equals 1/2 at t0 and rises
    there with the slope of Phi((t - t0) / sigma_t).
    """
    t = _check_nonnegative(t, "elapsed time")
    if p.v_cld == 0.0:
        return _out(np.where(t > 0, 1.0, 0.5))
    mean = p.pulse_gain * (-p.v_e_set * np.expm1(-t / p.rc_time)) ** 2
    return _out(_crossing_probability(mean, p))


def linearized_sense_probability(t, p: DetectorParams):
    """Phi((t - t0) / sigma_t), the first-order form of :func:`sense_probability` about t0."""
    t = _check_nonnegative(t, "elapsed time")
    t0 = threshold_crossing_time(p)
    width = sensing_width(p)
    if width == 0.0:
        return _out(np.where(t > t0, 1.0, np.where(t == t0, 0.5, 0.0)))
    return _out(ndtr((t - t0) / width))


def detection_probability(t, p: DetectorParams):
    """P_d(t) = P_s(t) P_a(V_e(t)), or the ideal dead-time step for stepwise devices."""
    t = _check_nonnegative(t, "elapsed time")
    if p.stepwise:
        return _out(np.where(t >= p.dead_time, 1.0, 0.0))
    return _out(
        np.asarray(sense_probability(t, p)) * np.asarray(avalanche_probability(excess_voltage(t, p), p))
    )


def recovered_detection_probability(p: DetectorParams) -> float:
    """Detection probability of a fully recharged detector (t -> infinity)."""
    if p.stepwise:
        return 1.0
    pa = -math.expm1(-p.v_e_set / p.v_characteristic)
    if p.v_cld == 0.0:
        return float(pa)
    return float(pa * _crossing_probability(p.pulse_gain * p.v_e_set**2, p))
