"""Monte-Carlo simulation of a single detector and its effective duty cycle."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numba
import numpy as np
from scipy.interpolate import CubicHermiteSpline

from . import recovery
from ._io import atomic_write_text
from .events import EventSequence, SourceModel, child_seed, generate, make_rng
from .recovery import DetectorParams

NO_AVALANCHE = 0
AVALANCHE_UNSENSED = 1
AVALANCHE_SENSED = 2
DISPOSITION_NAMES = ("no_avalanche", "avalanche_unsensed", "avalanche_sensed")


class EstimateError(ValueError):
    """Duty cycle requested from a trace that holds no input events."""


@numba.njit(cache=True, nogil=True)
def _sweep(times, uniforms, normals, v_e_set, rc, v_c, gain, v_cld, sigma_rel, stepwise, dead_time, disp, heights):
    n_aval = 0
    t_last = -np.inf
    for i in range(times.size):
        t = times[i]
        if stepwise:
            if t - t_last >= dead_time:
                disp[i] = 2
                heights[n_aval] = gain * v_e_set * v_e_set
                n_aval += 1
                t_last = t
            else:
                disp[i] = 0
            continue
        v = -v_e_set * math.expm1(-(t - t_last) / rc)
        if uniforms[i] < -math.expm1(-v / v_c):
            h = gain * v * v * (1.0 + sigma_rel * normals[i])
            if h < 0.0:
                h = 0.0
            heights[n_aval] = h
            n_aval += 1
            disp[i] = 2 if h >= v_cld else 1
            t_last = t
        else:
            disp[i] = 0
    return n_aval


@dataclass
class DetectorTrace:
    """Per-event outcome of one simulated detector."""

    times: np.ndarray
    dispositions: np.ndarray
    avalanche_times: np.ndarray
    pulse_heights: np.ndarray
    duration: float
    params: DetectorParams
    seed: int | None = None

    @property
    def input_count(self) -> int:
        return int(self.times.size)

    @property
    def avalanche_count(self) -> int:
        return int(self.avalanche_times.size)

    @property
    def sensed_mask(self) -> np.ndarray:
        return self.dispositions == AVALANCHE_SENSED

    @property
    def sensed_count(self) -> int:
        return int(np.count_nonzero(self.sensed_mask))

    @property
    def sensed_times(self) -> np.ndarray:
        return self.times[self.sensed_mask]

    def counts(self) -> dict:
        c = np.bincount(self.dispositions, minlength=3)
        return dict(zip(DISPOSITION_NAMES, map(int, c)))

    def to_csv(self, header: str | None = None) -> str:
        """CSV of (time, disposition, pulse_height); height is blank without an avalanche."""
        heights = np.full(self.times.size, np.nan)
        heights[self.dispositions != NO_AVALANCHE] = self.pulse_heights
        lines = [f"# {line}" for line in (header or "").splitlines()]
        lines.append("time,disposition,pulse_height")
        for t, d, h in zip(self.times.tolist(), self.dispositions.tolist(), heights.tolist()):
            hs = "" if math.isnan(h) else f"{h:.17g}"
            lines.append(f"{t:.17g},{DISPOSITION_NAMES[d]},{hs}")
        return "\n".join(lines) + "\n"

    def write_csv(self, path, header: str | None = None) -> None:
        atomic_write_text(path, self.to_csv(header))


def simulate(seq: EventSequence, p: DetectorParams, seed: int) -> DetectorTrace:
    """Sweep the events in time order, tracking the time of the last avalanche.

    The detector starts fully recharged. Every avalanche resets the recharge
    clock whether or not its pulse crosses the discriminator.
    """
    rng = make_rng(seed)
    n = len(seq)
    uniforms = rng.random(n)
    normals = rng.standard_normal(n)
    disp = np.empty(n, dtype=np.int8)
    heights = np.empty(n, dtype=np.float64)
    n_aval = _sweep(
        seq.times, uniforms, normals,
        p.v_e_set, p.rc_time, p.v_characteristic, p.pulse_gain, p.v_cld, p.sigma_rel,
        p.stepwise, p.dead_time or 0.0, disp, heights,
    )
    aval = disp != NO_AVALANCHE
    return DetectorTrace(
        times=seq.times,
        dispositions=disp,
        avalanche_times=seq.times[aval],
        pulse_heights=heights[:n_aval].copy(),
        duration=seq.duration,
        params=p,
        seed=seed,
    )


@dataclass(frozen=True)
class DutyCycleEstimate:
    eta_fractional: float
    eta_area: float
    input_rate: float
    observed_rate: float
    sensed_count: int
    stderr_fractional: float
    stderr_area: float
    input_count: int = 0
    source_rate: float | None = None

    @property
    def combined_stderr(self) -> float:
        return math.hypot(self.stderr_fractional, self.stderr_area)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def eta_fractional(trace: DetectorTrace) -> tuple[float, float]:
    """Fraction of input events that were sensed, with its binomial standard error."""
    n = trace.input_count
    if n == 0:
        raise EstimateError("duty cycle is undefined for a trace with no input events")
    eta = trace.sensed_count / n
    return eta, math.sqrt(eta * (1.0 - eta) / n)


class _RecoveryIntegral:
    """F(s) = integral of P_d over [0, s], tabulated once per parameter set.

    Gauss-Legendre panels on a grid refined around the discriminator crossing,
    Hermite interpolation in between (F' = P_d is known exactly at nodes), and
    a linear tail beyond 50 RC where P_d is constant to double precision.
    """

    def __init__(self, p: DetectorParams, panels_per_rc: int = 200, span_rc: float = 50.0):
        self.p = p
        self.t_max = span_rc * p.rc_time
        t0 = recovery.threshold_crossing_time(p)
        width = recovery.sensing_width(p)
        nodes = [np.linspace(0.0, self.t_max, int(span_rc * panels_per_rc) + 1)]
        if width > 0:
            nodes.append(t0 + width * np.linspace(-12.0, 12.0, 481))
        else:
            nodes.append([t0])
        x = np.unique(np.clip(np.concatenate(nodes), 0.0, self.t_max))
        gl_x, gl_w = np.polynomial.legendre.leggauss(10)
        a, b = x[:-1], x[1:]
        half = 0.5 * (b - a)
        pts = (0.5 * (a + b))[:, None] + half[:, None] * gl_x[None, :]
        panel = half * (recovery.detection_probability(pts, p) @ gl_w)
        F = np.concatenate([[0.0], np.cumsum(panel)])
        self.x = x
        self._spline = CubicHermiteSpline(x, F, recovery.detection_probability(x, p))
        self.F_max = float(F[-1])
        self.tail_rate = float(recovery.detection_probability(self.t_max, p))

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        inside = np.minimum(s, self.t_max)
        out = self._spline(inside)
        return np.where(s > self.t_max, self.F_max + (s - self.t_max) * self.tail_rate, out)


_integral_cache: dict = {}


def recovery_integral(p: DetectorParams):
    """Cumulative integral of the detection probability for ``p`` (cached)."""
    if p.stepwise:
        return lambda s: np.maximum(np.asarray(s, dtype=float) - p.dead_time, 0.0)
    if p not in _integral_cache:
        if len(_integral_cache) > 256:
            _integral_cache.clear()
        _integral_cache[p] = _RecoveryIntegral(p)
    return _integral_cache[p]


def _segment_areas(trace: DetectorTrace, p: DetectorParams):
    """Area under P_d for each inter-avalanche segment, plus segment lengths."""
    av = trace.avalanche_times
    if av.size == 0:
        lengths = np.array([trace.duration])
        return lengths * recovery.recovered_detection_probability(p), lengths
    first = av[0]
    ends = np.append(av[1:], trace.duration)
    lengths = np.concatenate([[first], ends - av])
    areas = np.empty_like(lengths)
    areas[0] = first * recovery.recovered_detection_probability(p)
    areas[1:] = recovery_integral(p)(ends - av)
    return areas, lengths


def eta_area(trace: DetectorTrace, p: DetectorParams | None = None, batches: int = 64) -> tuple[float, float]:
    """Time average of the detection probability over the trace.

    Returns the estimate and a batch-means standard error computed over
    contiguous groups of inter-avalanche segments.
    """
    p = p or trace.params
    areas, lengths = _segment_areas(trace, p)
    eta = float(areas.sum() / trace.duration)
    k = min(batches, areas.size)
    if k < 2:
        return eta, 0.0
    groups = np.array_split(np.arange(areas.size), k)
    a = np.array([areas[g].sum() for g in groups])
    w = np.array([lengths[g].sum() for g in groups])
    ratio = a / w
    var = np.sum(w**2 * (ratio - eta) ** 2) / (np.sum(w) ** 2) * k / (k - 1)
    return eta, math.sqrt(var)


def estimate(trace: DetectorTrace, p: DetectorParams | None = None) -> DutyCycleEstimate:
    eta_f, se_f = eta_fractional(trace)
    eta_a, se_a = eta_area(trace, p)
    input_rate = trace.input_count / trace.duration
    return DutyCycleEstimate(
        eta_fractional=eta_f,
        eta_area=eta_a,
        input_rate=input_rate,
        observed_rate=eta_f * input_rate,
        sensed_count=trace.sensed_count,
        stderr_fractional=se_f,
        stderr_area=se_a,
        input_count=trace.input_count,
    )


def run_cell(p: DetectorParams, rate: float, duration: float, seed) -> DutyCycleEstimate:
    """Generate a Poisson stream at ``rate``, simulate it and estimate the duty cycle."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    gen_seed, sim_seed = ss.spawn(2)
    seq = generate(SourceModel(rate=rate), duration, gen_seed)
    trace = simulate(seq, p, sim_seed)
    est = estimate(trace, p)
    return DutyCycleEstimate(**{**est.to_dict(), "source_rate": rate})


def rate_sweep(
    p: DetectorParams,
    rates,
    duration: float | None = None,
    seed: int = 0,
    events_per_point: int | None = None,
    jobs: int = 1,
) -> list[DutyCycleEstimate]:
    """One duty-cycle estimate per input rate.

    Give a fixed ``duration`` or ``events_per_point`` (duration = events / rate).
    Each rate gets its own seed stream, so results do not depend on ``jobs``.
    """
    rates = [float(r) for r in rates]
    if any(not r > 0 for r in rates):
        raise ValueError("rates must be positive")
    if (duration is None) == (events_per_point is None):
        raise ValueError("give exactly one of duration or events_per_point")
    durations = [duration if duration is not None else events_per_point / r for r in rates]
    tasks = [(p, r, d, child_seed(seed, i)) for i, (r, d) in enumerate(zip(rates, durations))]
    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            return list(pool.map(lambda a: run_cell(*a), tasks))
    return [run_cell(*a) for a in tasks]
