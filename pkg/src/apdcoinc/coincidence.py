"""Accidental-coincidence rates for two asynchronously operated detectors."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .lut import DutyCycleTable, LUTError


def _check(name, value):
    if not value >= 0 or math.isinf(value):
        raise ValueError(f"{name} must be finite and >= 0, got {value!r}")


def accidentals_naive(s1: float, s2: float, tau1: float, tau2: float) -> float:
    """S1 S2 (tau1 + tau2): overlap rate of two independent pulse trains."""
    for name, v in (("s1", s1), ("s2", s2), ("tau1", tau1), ("tau2", tau2)):
        _check(name, v)
    return s1 * s2 * (tau1 + tau2)


def accidentals_corrected(s1: float, s2: float, tau1: float, tau2: float, eta1: float, eta2: float) -> float:
    """S1 S2 (tau1/eta1 + tau2/eta2), with eta the effective duty cycle of each arm.

    Grouped per detector this is S2 (S1 tau1 / eta1) + S1 (S2 tau2 / eta2), so
    eta reads as the fraction of incoming events that produce a detection.
    """
    for name, v in (("s1", s1), ("s2", s2), ("tau1", tau1), ("tau2", tau2)):
        _check(name, v)
    for name, eta in (("eta1", eta1), ("eta2", eta2)):
        if not 0 < eta <= 1:
            raise ValueError(f"{name} must lie in (0, 1], got {eta!r}")
    return s1 * s2 * (tau1 / eta1 + tau2 / eta2)


@dataclass(frozen=True)
class CoincidenceMeasurement:
    """Observed rates (Hz), pulse widths (s) and the arms' operating points (V)."""

    s1: float
    s2: float
    tau1: float
    tau2: float
    c_raw: float
    v_e1: float | None = None
    v_e2: float | None = None

    def __post_init__(self):
        for name in ("s1", "s2", "tau1", "tau2", "c_raw"):
            _check(name, getattr(self, name))

    @classmethod
    def from_counts(cls, c_raw, s1, s2, integration, tau1, tau2, v_e1=None, v_e2=None):
        if not integration > 0:
            raise ValueError(f"integration time must be positive, got {integration!r}")
        return cls(s1 / integration, s2 / integration, tau1, tau2, c_raw / integration, v_e1, v_e2)


@dataclass(frozen=True)
class CorrectionResult:
    c_acc_naive: float
    c_acc_corrected: float
    c_corrected: float
    eta1: float
    eta2: float

    @property
    def negative(self) -> bool:
        """Net rate fell below zero; reported unclamped."""
        return self.c_corrected < 0

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["c_net_naive"] = self.c_corrected + self.c_acc_corrected - self.c_acc_naive
        d["negative"] = self.negative
        return d


def _arm_eta(table, arm, v_e, s):
    if s == 0:
        # no singles on this arm: accidentals vanish whatever eta is
        return 1.0
    if v_e is None:
        raise ValueError(f"detector {arm}: operating point v_e{arm} is required for a table lookup")
    try:
        return table.lookup_eta(v_e, s)
    except LUTError as err:
        # same error class, so callers can still tell saturation from range errors
        tagged = type(err)(f"detector {arm}: {err}")
        tagged.arm = arm
        raise tagged from err


def correct_with_eta(m: CoincidenceMeasurement, eta1: float, eta2: float) -> CorrectionResult:
    naive = accidentals_naive(m.s1, m.s2, m.tau1, m.tau2)
    corrected = accidentals_corrected(m.s1, m.s2, m.tau1, m.tau2, eta1, eta2)
    return CorrectionResult(naive, corrected, m.c_raw - corrected, eta1, eta2)


def correct(m: CoincidenceMeasurement, table: DutyCycleTable, table2: DutyCycleTable | None = None) -> CorrectionResult:
    """Look up each arm's duty cycle at its observed singles rate and apply both formulas.

    ``table2`` defaults to ``table`` when both detectors share a characterisation.
    """
    eta1 = _arm_eta(table, 1, m.v_e1, m.s1)
    eta2 = _arm_eta(table2 or table, 2, m.v_e2, m.s2)
    return correct_with_eta(m, eta1, eta2)
