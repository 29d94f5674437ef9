"""Run configuration: one JSON document, validated before any work starts.

Example::

    {
      "detector": {"v_e_set": 15.0, "rc_time": 1e-6, "v_characteristic": 5.0,
                   "pulse_gain": 0.01, "v_cld": 0.64, "sigma_rel": 0.15},
      "source": {"rate": 2e5, "dark_rate": 500},
      "seed": 1,
      "duration": 0.5,
      "lut": {"v_e_values": [10, 12, 14, 16], "input_rates": [1e3, 1e4, 1e5, 1e6],
              "events_per_cell": 100000},
      "fringe": {"pair_rate": 6e5, "background1": 1e5, "background2": 1e5,
                 "true_visibility": 0.99, "angles": [0, 22.5, 45, 67.5, 90, 112.5, 135, 157.5],
                 "tau1": 5e-8, "tau2": 5e-8, "duration_per_angle": 0.2}
    }

A detector block may give ``bias_voltage`` and ``breakdown_voltage`` instead of
``v_e_set``; the excess voltage is their difference. Every ``lut`` key is
optional: an empty block means the default grid (8 operating points above the
discriminator threshold, 24 input rates from 1e3 to 1e7 Hz, 1e5 events per cell).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from . import lut as _lut
from .recovery import DetectorParams


class ConfigError(ValueError):
    pass


_DETECTOR_KEYS = set(DetectorParams.__dataclass_fields__) | {"bias_voltage", "breakdown_voltage"}
_SOURCE_KEYS = {"rate", "dark_rate"}
_LUT_KEYS = {"v_e_values", "input_rates", "events_per_cell", "duration_per_cell"}
_FRINGE_KEYS = {
    "pair_rate", "background1", "background2", "true_visibility", "phase_deg",
    "angles", "tau1", "tau2", "duration_per_angle",
}
_TOP_KEYS = {"detector", "detector2", "source", "seed", "duration", "lut", "fringe", "jobs"}


def _reject_unknown(block: dict, allowed: set, where: str):
    if not isinstance(block, dict):
        raise ConfigError(f"{where}: expected an object")
    unknown = set(block) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {sorted(unknown)}")


def _number(block, key, where, positive=False, required=True, default=None):
    if key not in block:
        if required:
            raise ConfigError(f"{where}: missing required key {key!r}")
        return default
    value = block[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(f"{where}.{key}: expected a finite number, got {value!r}")
    if positive and not value > 0:
        raise ConfigError(f"{where}.{key}: must be positive, got {value!r}")
    if not positive and value < 0:
        raise ConfigError(f"{where}.{key}: must be >= 0, got {value!r}")
    return float(value)


def _number_list(block, key, where):
    values = block.get(key)
    if not isinstance(values, list) or not values:
        raise ConfigError(f"{where}.{key}: expected a non-empty list of numbers")
    return [_number({key: v}, key, where) for v in values]


def excess_from_bias(bias_voltage: float, breakdown_voltage: float) -> float:
    """Excess (over-)voltage from the applied bias and the device breakdown voltage."""
    v = bias_voltage - breakdown_voltage
    if not v > 0:
        raise ConfigError(f"bias {bias_voltage} V does not exceed breakdown {breakdown_voltage} V")
    return v


def parse_detector(block, where="detector") -> DetectorParams:
    _reject_unknown(block, _DETECTOR_KEYS, where)
    block = dict(block)
    if "bias_voltage" in block or "breakdown_voltage" in block:
        if "v_e_set" in block:
            raise ConfigError(f"{where}: give v_e_set or bias_voltage/breakdown_voltage, not both")
        bias = _number(block, "bias_voltage", where, positive=True)
        vbr = _number(block, "breakdown_voltage", where, positive=True)
        block.pop("bias_voltage")
        block.pop("breakdown_voltage")
        block["v_e_set"] = excess_from_bias(bias, vbr)
    try:
        return DetectorParams.from_dict(block)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"{where}: {err}") from None


@dataclass
class RunConfig:
    detector: DetectorParams = field(default_factory=DetectorParams)
    detector2: DetectorParams | None = None
    source: dict = field(default_factory=dict)
    seed: int = 0
    duration: float | None = None
    lut: dict = field(default_factory=dict)
    fringe: dict = field(default_factory=dict)
    jobs: int = 1
    raw: dict = field(default_factory=dict)

    @property
    def arm2(self) -> DetectorParams:
        return self.detector2 or self.detector

    def effective(self) -> dict:
        """The configuration actually used, for provenance blocks."""
        doc = {"detector": self.detector.to_dict(), "seed": self.seed}
        if self.detector2 is not None:
            doc["detector2"] = self.detector2.to_dict()
        for key in ("source", "lut", "fringe"):
            if getattr(self, key):
                doc[key] = getattr(self, key)
        if self.duration is not None:
            doc["duration"] = self.duration
        return doc


def parse_config(doc: dict) -> RunConfig:
    _reject_unknown(doc, _TOP_KEYS, "config")
    cfg = RunConfig(raw=doc)
    if "detector" in doc:
        cfg.detector = parse_detector(doc["detector"])
    if "detector2" in doc:
        cfg.detector2 = parse_detector(doc["detector2"], "detector2")
    if "source" in doc:
        _reject_unknown(doc["source"], _SOURCE_KEYS, "source")
        cfg.source = {
            "rate": _number(doc["source"], "rate", "source", positive=True),
            "dark_rate": _number(doc["source"], "dark_rate", "source", required=False, default=0.0),
        }
    if "seed" in doc:
        if isinstance(doc["seed"], bool) or not isinstance(doc["seed"], int) or doc["seed"] < 0:
            raise ConfigError("seed: expected a non-negative integer")
        cfg.seed = doc["seed"]
    if "jobs" in doc:
        if isinstance(doc["jobs"], bool) or not isinstance(doc["jobs"], int) or doc["jobs"] < 1:
            raise ConfigError("jobs: expected a positive integer")
        cfg.jobs = doc["jobs"]
    cfg.duration = _number(doc, "duration", "config", positive=True, required=False)
    if "lut" in doc:
        block = doc["lut"]
        _reject_unknown(block, _LUT_KEYS, "lut")
        if "v_e_values" in block:
            v_e_values = _number_list(block, "v_e_values", "lut")
        else:
            try:
                v_e_values = list(_lut.default_v_e_values(cfg.detector))
            except ValueError as err:
                raise ConfigError(f"lut: no default operating points for this detector ({err}); give v_e_values") from None
        lut = {
            "v_e_values": v_e_values,
            "input_rates": _number_list(block, "input_rates", "lut")
            if "input_rates" in block
            else list(_lut.DEFAULT_INPUT_RATES),
        }
        has_events, has_duration = "events_per_cell" in block, "duration_per_cell" in block
        if has_events and has_duration:
            raise ConfigError("lut: give at most one of events_per_cell or duration_per_cell")
        if has_duration:
            lut["duration_per_cell"] = _number(block, "duration_per_cell", "lut", positive=True)
        else:
            n = block.get("events_per_cell", _lut.DEFAULT_EVENTS_PER_CELL)
            if isinstance(n, bool) or not isinstance(n, int) or n <= 0:
                raise ConfigError("lut.events_per_cell: expected a positive integer")
            lut["events_per_cell"] = n
        cfg.lut = lut
    if "fringe" in doc:
        block = doc["fringe"]
        _reject_unknown(block, _FRINGE_KEYS, "fringe")
        fr = {
            "pair_rate": _number(block, "pair_rate", "fringe"),
            "background1": _number(block, "background1", "fringe", required=False, default=0.0),
            "background2": _number(block, "background2", "fringe", required=False, default=0.0),
            "true_visibility": _number(block, "true_visibility", "fringe", required=False, default=1.0),
            "phase_deg": _number(block, "phase_deg", "fringe", required=False, default=0.0),
            "tau1": _number(block, "tau1", "fringe", positive=True),
            "tau2": _number(block, "tau2", "fringe", positive=True),
            "duration_per_angle": _number(block, "duration_per_angle", "fringe", positive=True),
        }
        if fr["true_visibility"] > 1:
            raise ConfigError("fringe.true_visibility: must lie in [0, 1]")
        angles = block.get("angles")
        if not isinstance(angles, list) or not angles:
            raise ConfigError("fringe.angles: expected a non-empty list of numbers")
        fr["angles"] = [float(a) for a in angles if isinstance(a, (int, float)) and not isinstance(a, bool)]
        if len(fr["angles"]) != len(angles):
            raise ConfigError("fringe.angles: expected numbers")
        cfg.fringe = fr
    return cfg


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: invalid JSON at line {err.lineno}, column {err.colno}: {err.msg}") from None
    return parse_config(doc)
