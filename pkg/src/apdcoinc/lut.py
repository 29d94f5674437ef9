"""Effective duty-cycle lookup tables indexed by operating point and observed rate."""

from __future__ import annotations

import datetime as _dt
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import isotonic_regression

from .detector import run_cell
from .events import RNG_NAME, child_seed
from .recovery import DetectorParams

FORMAT_NAME = "apdcoinc-duty-cycle-table"
FORMAT_VERSION = "1"

DEFAULT_INPUT_RATES = tuple(float(r) for r in np.logspace(3, 7, 24))
DEFAULT_EVENTS_PER_CELL = 100_000


def default_v_e_values(p: DetectorParams, top: float = 24.0, n: int = 8) -> tuple[float, ...]:
    """Operating points from 2 V above the discriminator threshold up to ``top``.

    The duty cycle bends sharply in v_e just above threshold, so the points
    are spaced geometrically in (v_e - threshold) to keep linear interpolation
    between rows accurate. Closer to threshold even a recharged pulse often
    misses the discriminator.
    """
    v_th = p.threshold_voltage
    if not top > v_th + 2.0:
        raise ValueError(f"top={top!r} V must exceed the threshold voltage {v_th:.6g} V by more than 2 V")
    return tuple(round(v_th + float(x), 6) for x in np.geomspace(2.0, top - v_th, n))


DEFAULT_V_E_VALUES = default_v_e_values(DetectorParams())


class LUTError(ValueError):
    pass


class LUTRangeError(LUTError):
    """Query outside the tabulated operating-point range."""


class SaturationAmbiguityError(LUTError):
    """Observed rate lies beyond the pre-peak branch, so the input rate is not unique."""


class LUTBuildError(LUTError):
    pass


class LUTFormatError(LUTError):
    def __init__(self, message, line=None, column=None):
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + where)
        self.line = line
        self.column = column


class LUTVersionError(LUTError):
    pass


@dataclass
class DutyCycleTable:
    """eta on a (v_e_set x observed rate) grid; NaN marks cells past a row's rate peak."""

    v_e_axis: np.ndarray
    observed_rate_axis: np.ndarray
    eta_grid: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.v_e_axis = np.asarray(self.v_e_axis, dtype=float)
        self.observed_rate_axis = np.asarray(self.observed_rate_axis, dtype=float)
        self.eta_grid = np.asarray(self.eta_grid, dtype=float).reshape(self.v_e_axis.size, self.observed_rate_axis.size)
        for name, axis in (("v_e_axis", self.v_e_axis), ("observed_rate_axis", self.observed_rate_axis)):
            if axis.ndim != 1 or axis.size == 0:
                raise LUTError(f"{name} must be a non-empty 1-d axis")
            if np.any(np.diff(axis) <= 0):
                raise LUTError(f"{name} must be strictly ascending")
        finite = self.eta_grid[np.isfinite(self.eta_grid)]
        if np.any((finite < 0) | (finite > 1)):
            raise LUTError("eta values must lie in [0, 1]")

    def __eq__(self, other):
        if not isinstance(other, DutyCycleTable):
            return NotImplemented
        return (
            np.array_equal(self.v_e_axis, other.v_e_axis)
            and np.array_equal(self.observed_rate_axis, other.observed_rate_axis)
            and np.array_equal(self.eta_grid, other.eta_grid, equal_nan=True)
            and self.provenance == other.provenance
        )

    @property
    def shape(self):
        return self.eta_grid.shape

    def lookup_eta(self, v_e: float, observed_rate: float) -> float:
        return lookup_eta(self, v_e, observed_rate)


def _bracket(axis, x):
    """Index i and weight w with x = (1-w) axis[i] + w axis[i+1]; w == 0 on a node."""
    if axis.size == 1:
        return 0, 0.0
    i = int(np.searchsorted(axis, x, side="right")) - 1
    i = min(max(i, 0), axis.size - 2)
    w = (x - axis[i]) / (axis[i + 1] - axis[i])
    if w == 1.0:
        return i + 1, 0.0
    return i, w


def lookup_eta(table: DutyCycleTable, v_e: float, observed_rate: float) -> float:
    """Bilinear interpolation in (v_e, observed rate); exact on grid nodes.

    Rates below the first column take the first column's value (the duty cycle
    is flat in the low-rate limit).
    """
    ve_axis, r_axis, grid = table.v_e_axis, table.observed_rate_axis, table.eta_grid
    if not (ve_axis[0] <= v_e <= ve_axis[-1]):
        raise LUTRangeError(f"v_e={v_e!r} V outside table range [{float(ve_axis[0])!r}, {float(ve_axis[-1])!r}]")
    if not observed_rate >= 0:
        raise LUTRangeError(f"observed rate must be >= 0, got {observed_rate!r}")
    if observed_rate > r_axis[-1]:
        raise SaturationAmbiguityError(
            f"observed rate {observed_rate:.6g} Hz exceeds the tabulated pre-peak branch "
            f"(max {r_axis[-1]:.6g} Hz); the input rate is not uniquely determined"
        )
    i, wi = _bracket(ve_axis, v_e)
    j, wj = _bracket(r_axis, max(observed_rate, r_axis[0]))
    total = 0.0
    for di, a in ((0, 1.0 - wi), (1, wi)):
        for dj, b in ((0, 1.0 - wj), (1, wj)):
            weight = a * b
            if weight == 0.0:
                continue
            value = grid[i + di, j + dj]
            if math.isnan(value):
                raise SaturationAmbiguityError(
                    f"observed rate {observed_rate:.6g} Hz at v_e={v_e!r} V lies past the observed-rate "
                    f"peak of the row at v_e={float(ve_axis[i + di])!r} V; the input rate is not uniquely determined"
                )
            total += weight * value
    return float(total)


def _pre_peak(obs, eta):
    """Samples up to the observed-rate maximum, keeping only strictly rising observed rates."""
    k = int(np.argmax(obs))
    keep = []
    top = -np.inf
    for idx in range(k + 1):
        if obs[idx] > top:
            keep.append(idx)
            top = obs[idx]
    keep = np.array(keep)
    return obs[keep], eta[keep]


def assemble(v_e_values, observed, eta, provenance=None) -> DutyCycleTable:
    """Re-index simulated cells by observed rate.

    ``observed`` and ``eta`` are (rows x input rates) arrays from simulation.
    Each row keeps its pre-peak branch, smoothed to be non-increasing in rate.
    The observed-rate axis is the union of every row's branch samples, so each
    row is interpolated (linearly in log rate) only between its own samples.
    Below a row's first sample eta is held constant; past its peak it is NaN.
    """
    observed = np.asarray(observed, dtype=float)
    eta = np.asarray(eta, dtype=float)
    m, n = observed.shape
    branches = []
    for i in range(m):
        if n > 1 and int(np.argmax(observed[i])) == 0:
            raise LUTBuildError(
                f"row v_e={v_e_values[i]!r} V is past its observed-rate peak at every sampled input rate"
            )
        o, e = _pre_peak(observed[i], eta[i])
        if o[-1] <= 0:
            raise LUTBuildError(f"row v_e={v_e_values[i]!r} V has no usable observed-rate samples")
        keep = o > 0
        o, e = o[keep], isotonic_regression(e[keep], increasing=False).x
        branches.append((o, e))
    axis = np.unique(np.concatenate([o for o, _ in branches]))
    grid = np.full((m, axis.size), np.nan)
    for i, (o, e) in enumerate(branches):
        ok = axis <= o[-1]
        grid[i, ok] = np.interp(np.log(axis[ok]), np.log(o), e)
        on_node = np.isin(axis, o)
        grid[i, on_node] = e[np.searchsorted(o, axis[on_node])]
    return DutyCycleTable(np.asarray(v_e_values, dtype=float), axis, grid, provenance or {})


def _timestamp():
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    now = _dt.datetime.fromtimestamp(int(epoch), _dt.timezone.utc) if epoch else _dt.datetime.now(_dt.timezone.utc)
    return now.replace(microsecond=0).isoformat()


def build(
    base: DetectorParams,
    v_e_values,
    input_rate_values,
    duration: float | None = None,
    seed: int = 0,
    events_per_cell: int | None = None,
    jobs: int = 1,
) -> DutyCycleTable:
    """Simulate every (v_e, input rate) cell and tabulate eta against observed rate.

    Cells are seeded independently from (seed, row, column) so the table does
    not depend on ``jobs``.
    """
    v_e_values = [float(v) for v in v_e_values]
    rates = [float(r) for r in input_rate_values]
    for name, axis in (("v_e_values", v_e_values), ("input_rate_values", rates)):
        if not axis or any(v <= 0 for v in axis) or any(b <= a for a, b in zip(axis, axis[1:])):
            raise ValueError(f"{name} must be non-empty, positive and strictly ascending")
    if (duration is None) == (events_per_cell is None):
        raise ValueError("give exactly one of duration or events_per_cell")
    rows = [base.with_(v_e_set=v) for v in v_e_values]
    tasks = []
    for i, p in enumerate(rows):
        for j, r in enumerate(rates):
            d = duration if duration is not None else events_per_cell / r
            tasks.append((p, r, d, child_seed(seed, i, j)))
    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            results = list(pool.map(lambda a: run_cell(*a), tasks))
    else:
        results = [run_cell(*a) for a in tasks]
    obs = np.array([e.observed_rate for e in results]).reshape(len(rows), len(rates))
    eta = np.array([e.eta_fractional for e in results]).reshape(len(rows), len(rates))
    base_dict = base.to_dict()
    base_dict.pop("v_e_set")
    provenance = {
        "base_params": base_dict,
        "input_rate_values": rates,
        "duration_per_cell": duration,
        "events_per_cell": events_per_cell,
        "seed": seed,
        "seed_policy": f"{RNG_NAME} seeded by SeedSequence(seed, spawn_key=(row, column))",
        "built": _timestamp(),
        "cells": {"observed_rate": obs.tolist(), "eta": eta.tolist()},
    }
    return assemble(v_e_values, obs, eta, provenance)


def _floats(values):
    return [None if math.isnan(v) else float(v) for v in values]


def dumps(table: DutyCycleTable) -> str:
    doc = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "provenance": table.provenance,
        "v_e_axis": _floats(table.v_e_axis),
        "observed_rate_axis": _floats(table.observed_rate_axis),
        "eta_grid": [_floats(row) for row in table.eta_grid],
    }
    # json writes floats with repr(), the shortest string that round-trips exactly
    return json.dumps(doc, indent=1) + "\n"


def loads(text: str) -> DutyCycleTable:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise LUTFormatError(f"malformed table file: {err.msg}", err.lineno, err.colno) from None
    if not isinstance(doc, dict) or doc.get("format") != FORMAT_NAME:
        raise LUTFormatError("not a duty-cycle table document")
    if doc.get("version") != FORMAT_VERSION:
        raise LUTVersionError(f"unsupported table format version {doc.get('version')!r}, expected {FORMAT_VERSION!r}")
    try:
        grid = [[math.nan if v is None else float(v) for v in row] for row in doc["eta_grid"]]
        ve = [float(v) for v in doc["v_e_axis"]]
        rates = [float(v) for v in doc["observed_rate_axis"]]
        if len(grid) != len(ve) or any(len(row) != len(rates) for row in grid):
            raise LUTFormatError("eta_grid shape does not match the axes")
        return DutyCycleTable(ve, rates, grid, doc.get("provenance", {}))
    except (KeyError, TypeError) as err:
        raise LUTFormatError(f"missing or invalid field: {err}") from None


def save(table: DutyCycleTable, path) -> None:
    """Write atomically: a failed write never leaves a partial table behind."""
    from ._io import atomic_write_text

    atomic_write_text(path, dumps(table))


def load(path) -> DutyCycleTable:
    with open(path) as fh:
        return loads(fh.read())


def write_flat_csv(table: DutyCycleTable, path) -> None:
    from ._io import atomic_write_text

    lines = ["v_e,observed_rate,eta"]
    for v, row in zip(table.v_e_axis, table.eta_grid):
        for r, e in zip(table.observed_rate_axis, row):
            if not math.isnan(e):
                lines.append(f"{v:.17g},{r:.17g},{e:.17g}")
    atomic_write_text(path, "\n".join(lines) + "\n")
