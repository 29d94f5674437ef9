"""Two-detector brute-force experiments: AND-gate coincidence counting on simulated arms."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .detector import DetectorTrace, simulate
from .events import EventSequence, child_seed, make_rng, poisson_times
from .fringe import FringeDataset, FringePoint
from .recovery import DetectorParams


def count_overlaps(trace1: DetectorTrace, trace2: DetectorTrace, tau1: float, tau2: float) -> int:
    """Number of sensed-pulse pairs whose digital pulses [t, t + tau] intersect.

    Pulses touching at an endpoint count. A pulse overlapping several pulses on
    the other arm contributes once per pair.
    """
    if trace1.duration != trace2.duration:
        raise ValueError(f"traces differ in duration: {trace1.duration} vs {trace2.duration}")
    return overlap_count(trace1.sensed_times, trace2.sensed_times, tau1, tau2)


def overlap_count(t1: np.ndarray, t2: np.ndarray, tau1: float, tau2: float) -> int:
    if tau1 < 0 or tau2 < 0:
        raise ValueError("pulse widths must be >= 0")
    # [a, a + tau1] meets [b, b + tau2]  <=>  a - tau2 <= b <= a + tau1
    hi = np.searchsorted(t2, t1 + tau1, side="right")
    lo = np.searchsorted(t2, t1 - tau2, side="left")
    return int(np.sum(hi - lo))


@dataclass(frozen=True)
class AccidentalMeasurement:
    measured_rate: float
    s1: float
    s2: float
    coincidences: int
    duration: float

    @property
    def stderr(self) -> float:
        return math.sqrt(max(self.coincidences, 1)) / self.duration


def measure_accidentals(
    p1: DetectorParams,
    p2: DetectorParams,
    rate1: float,
    rate2: float,
    tau1: float,
    tau2: float,
    duration: float,
    seed: int,
) -> AccidentalMeasurement:
    """Count AND-gate coincidences between two detectors fed independent Poisson streams."""
    if not duration > 0:
        raise ValueError("duration must be positive")
    if rate1 < 0 or rate2 < 0:
        raise ValueError("rates must be >= 0")
    traces = []
    for arm, (p, rate) in enumerate(((p1, rate1), (p2, rate2))):
        gen, sim = child_seed(seed, arm).spawn(2)
        seq = EventSequence(poisson_times(make_rng(gen), rate, duration), duration, source_rate=rate)
        traces.append(simulate(seq, p, sim))
    n = count_overlaps(traces[0], traces[1], tau1, tau2)
    return AccidentalMeasurement(
        measured_rate=n / duration,
        s1=traces[0].sensed_count / duration,
        s2=traces[1].sensed_count / duration,
        coincidences=n,
        duration=duration,
    )


@dataclass(frozen=True)
class PairSourceModel:
    """Correlated-pair source seen through a polarization analyzer on each arm.

    Each pair photon passes its own analyzer with probability 1/2, and both pass
    together with probability (1 + V cos 2(theta - phase)) / 4, so singles do
    not depend on angle while coincidences follow the fringe.
    """

    pair_rate: float
    background1: float = 0.0
    background2: float = 0.0
    true_visibility: float = 1.0
    phase_deg: float = 0.0

    def __post_init__(self):
        for name in ("pair_rate", "background1", "background2"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be >= 0")
        if not 0 <= self.true_visibility <= 1:
            raise ValueError("true_visibility must lie in [0, 1]")

    def pass_probabilities(self, angle_deg: float) -> tuple[float, float, float]:
        """(both arms, arm 1 only, arm 2 only) for one pair at analyzer angle ``angle_deg``."""
        c = self.true_visibility * math.cos(math.radians(2.0 * (angle_deg - self.phase_deg)))
        both = (1.0 + c) / 4.0
        single = (1.0 - c) / 4.0
        return both, single, single


def _fringe_point(src, p1, p2, angle, tau1, tau2, duration, ss):
    rng = make_rng(ss)
    pairs = poisson_times(rng, src.pair_rate, duration)
    both, only1, only2 = src.pass_probabilities(angle)
    u = rng.random(pairs.size)
    to1 = u < both + only1
    to2 = (u < both) | ((u >= both + only1) & (u < both + only1 + only2))
    traces = []
    for arm, (mask, bg, p) in enumerate(((to1, src.background1, p1), (to2, src.background2, p2))):
        times = np.concatenate([pairs[mask], poisson_times(rng, bg, duration)])
        times.sort(kind="stable")
        traces.append(simulate(EventSequence(times, duration), p, rng.integers(2**63)))
    n = count_overlaps(traces[0], traces[1], tau1, tau2)
    return FringePoint(float(angle), float(n), float(traces[0].sensed_count), float(traces[1].sensed_count), duration)


def generate_fringe_dataset(
    src: PairSourceModel,
    p1: DetectorParams,
    p2: DetectorParams,
    angles,
    tau1: float,
    tau2: float,
    duration_per_angle: float,
    seed: int,
    jobs: int = 1,
) -> FringeDataset:
    """Synthetic polarization-correlation scan through two full detector chains."""
    angles = [float(a) for a in angles]
    if not angles:
        raise ValueError("need at least one analyzer angle")
    tasks = [(src, p1, p2, a, tau1, tau2, duration_per_angle, child_seed(seed, k)) for k, a in enumerate(angles)]
    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            points = list(pool.map(lambda t: _fringe_point(*t), tasks))
    else:
        points = [_fringe_point(*t) for t in tasks]
    meta = {
        "pair_rate": src.pair_rate,
        "background1": src.background1,
        "background2": src.background2,
        "true_visibility": src.true_visibility,
        "phase_deg": src.phase_deg,
        "seed": seed,
    }
    return FringeDataset(points, tau1, tau2, p1.v_e_set, p2.v_e_set, meta)
