"""Polarization-correlation fringe fitting and accidental subtraction."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._io import atomic_write_text
from .coincidence import CoincidenceMeasurement, correct, correct_with_eta
from .lut import DutyCycleTable, LUTError


class FitError(ValueError):
    pass


@dataclass(frozen=True)
class FringePoint:
    angle: float
    c_raw: float
    s1: float
    s2: float
    integration: float

    def __post_init__(self):
        if not self.integration > 0:
            raise ValueError(f"integration time must be positive, got {self.integration!r}")
        for name in ("c_raw", "s1", "s2"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} counts must be >= 0")


@dataclass
class FringeDataset:
    """Per-angle coincidence and singles counts with the arms' pulse widths and operating points."""

    points: list[FringePoint]
    tau1: float
    tau2: float
    v_e1: float | None = None
    v_e2: float | None = None
    meta: dict = field(default_factory=dict)

    @property
    def angles(self) -> np.ndarray:
        return np.array([pt.angle for pt in self.points])

    def to_csv(self) -> str:
        lines = [f"# tau1={self.tau1!r} tau2={self.tau2!r} v_e1={self.v_e1!r} v_e2={self.v_e2!r}"]
        lines += [f"# {k}={v!r}" for k, v in self.meta.items()]
        lines.append("angle_deg,c_raw_counts,s1_counts,s2_counts,integration_s")
        for pt in self.points:
            lines.append(f"{pt.angle:.17g},{pt.c_raw:.17g},{pt.s1:.17g},{pt.s2:.17g},{pt.integration:.17g}")
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        atomic_write_text(path, self.to_csv())

    @classmethod
    def read_csv(cls, path, **overrides) -> "FringeDataset":
        header = {}
        points = []
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    for item in line[1:].split():
                        key, _, value = item.partition("=")
                        header[key] = value
                    continue
                if line.startswith("angle_deg"):
                    continue
                try:
                    angle, c, s1, s2, integ = (float(x) for x in line.split(","))
                except ValueError:
                    raise ValueError(f"{path}:{lineno}: expected 5 numeric columns") from None
                points.append(FringePoint(angle, c, s1, s2, integ))

        def num(key):
            value = overrides.get(key)
            if value is not None:
                return float(value)
            raw = header.get(key)
            return None if raw in (None, "None") else float(raw)

        tau1, tau2 = num("tau1"), num("tau2")
        if tau1 is None or tau2 is None:
            raise ValueError(f"{path}: pulse widths tau1/tau2 missing from header and not given")
        return cls(points, tau1, tau2, num("v_e1"), num("v_e2"))


@dataclass(frozen=True)
class VisibilityFit:
    visibility: float
    amplitude: float
    offset: float
    phase: float
    residual_rms: float
    uncertainties: dict

    @property
    def unphysical(self) -> bool:
        """Visibility above 1, which only noise or over-subtraction can produce."""
        return self.visibility > 1.0

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["unphysical"] = self.unphysical
        return d


def fit_visibility(angles, rates, sigma=None) -> VisibilityFit:
    """Fit rate(theta) = offset (1 + V cos 2(theta - phase)) by linear least squares.

    The model is linear in (offset, offset V cos 2 phase, offset V sin 2 phase),
    so the fit is a single weighted solve; V and phase follow algebraically.
    ``sigma`` are per-point standard deviations; without them uncertainties
    are scaled by the residual variance.
    """
    theta = np.radians(np.asarray(angles, dtype=float))
    y = np.asarray(rates, dtype=float)
    if theta.size != y.size:
        raise FitError("angles and rates differ in length")
    if theta.size < 4:
        raise FitError(f"need at least 4 points, got {theta.size}")
    span = np.degrees(theta.max() - theta.min())
    if span < 90.0:
        raise FitError(f"analyzer angles span {span:.3g} deg, need at least 90 deg")
    X = np.column_stack([np.ones_like(theta), np.cos(2 * theta), np.sin(2 * theta)])
    w = np.ones_like(y) if sigma is None else 1.0 / np.asarray(sigma, dtype=float)
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise FitError("sigma must be positive and finite")
    coef, _, rank, _ = np.linalg.lstsq(X * w[:, None], y * w, rcond=None)
    resid = y - X @ coef
    rms = float(np.sqrt(np.mean(resid**2)))
    if rank < 3:
        raise FitError(f"angles do not constrain the fringe (rank {rank}); residual rms {rms:.6g}")
    c0, a, b = (float(x) for x in coef)
    if not c0 > 0:
        raise FitError(f"fitted offset {c0:.6g} is not positive; residual rms {rms:.6g}")
    amp = math.hypot(a, b)
    vis = amp / c0
    phase = (0.5 * math.degrees(math.atan2(b, a))) % 180.0

    cov = np.linalg.inv((X * w[:, None]).T @ (X * w[:, None]))
    if sigma is None:
        dof = y.size - 3
        cov *= (np.sum(resid**2) / dof) if dof > 0 else 0.0
    # first-order propagation to (V, amplitude, phase)
    if amp > 0:
        d_amp = np.array([0.0, a / amp, b / amp])
        d_vis = np.array([-amp / c0**2, a / (amp * c0), b / (amp * c0)])
        d_phase = np.degrees(0.5 * np.array([0.0, -b / amp**2, a / amp**2]))
    else:
        d_amp = d_vis = d_phase = np.zeros(3)
    unc = {
        "offset": float(math.sqrt(cov[0, 0])),
        "amplitude": float(math.sqrt(max(d_amp @ cov @ d_amp, 0.0))),
        "visibility": float(math.sqrt(max(d_vis @ cov @ d_vis, 0.0))),
        "phase": float(math.sqrt(max(d_phase @ cov @ d_phase, 0.0))) if amp > 0 else math.inf,
    }
    return VisibilityFit(vis, amp, float(c0), phase, rms, unc)


@dataclass(frozen=True)
class FringeAnalysis:
    fit_raw: VisibilityFit
    fit_naive: VisibilityFit
    fit_corrected: VisibilityFit
    rates_raw: np.ndarray
    rates_naive: np.ndarray
    rates_corrected: np.ndarray
    eta1: np.ndarray
    eta2: np.ndarray

    def to_dict(self) -> dict:
        return {
            "fit_raw": self.fit_raw.to_dict(),
            "fit_naive": self.fit_naive.to_dict(),
            "fit_corrected": self.fit_corrected.to_dict(),
        }


def analyze(dataset: FringeDataset, table1: DutyCycleTable | None, table2: DutyCycleTable | None = None, eta=None):
    """Fit raw coincidence rates and rates with both accidental estimates subtracted.

    Accidentals are computed per point from that point's singles rates. Pass
    ``eta=(eta1, eta2)`` instead of tables to use fixed duty cycles.
    """
    raw, naive, corr, e1s, e2s, sig = [], [], [], [], [], []
    for k, pt in enumerate(dataset.points):
        m = CoincidenceMeasurement.from_counts(
            pt.c_raw, pt.s1, pt.s2, pt.integration, dataset.tau1, dataset.tau2, dataset.v_e1, dataset.v_e2
        )
        if eta is not None:
            res = correct_with_eta(m, *eta)
        else:
            try:
                res = correct(m, table1, table2)
            except LUTError as err:
                tagged = type(err)(f"point {k} (angle {pt.angle:g} deg): {err}")
                tagged.arm = getattr(err, "arm", None)
                tagged.point = k
                raise tagged from err
        raw.append(m.c_raw)
        naive.append(m.c_raw - res.c_acc_naive)
        corr.append(res.c_corrected)
        e1s.append(res.eta1)
        e2s.append(res.eta2)
        sig.append(math.sqrt(max(pt.c_raw, 1.0)) / pt.integration)
    angles = dataset.angles
    return FringeAnalysis(
        fit_visibility(angles, raw, sig),
        fit_visibility(angles, naive, sig),
        fit_visibility(angles, corr, sig),
        np.array(raw), np.array(naive), np.array(corr), np.array(e1s), np.array(e2s),
    )
