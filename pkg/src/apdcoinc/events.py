"""Seeded generation of charge-carrier arrival sequences."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ._io import atomic_write_text

# Generator used for every stochastic draw in the package. Changing it changes
# all seeded outputs, so it is recorded in file provenance.
RNG_NAME = "numpy.PCG64"


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(seed))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def child_seed(seed: int, *key: int) -> np.random.SeedSequence:
    """Independent stream for cell ``key`` of a run seeded with ``seed``.

    Depends only on (seed, key), so results do not depend on execution order.
    """
    return np.random.SeedSequence(seed, spawn_key=tuple(key))


WaitingTimeSampler = Callable[[np.random.Generator, int], np.ndarray]


@dataclass(frozen=True)
class SourceModel:
    """Carrier source: a Poisson stream of ``rate`` or a custom waiting-time sampler.

    ``sampler(rng, n)`` must return ``n`` non-negative waiting times. Dark counts
    are always Poisson.
    """

    rate: float | None = None
    dark_rate: float = 0.0
    sampler: WaitingTimeSampler | None = None

    def __post_init__(self):
        if self.sampler is None:
            if self.rate is None or not self.rate > 0:
                raise ValueError(f"Poisson source needs a positive rate, got {self.rate!r}")
        elif self.rate is not None and not self.rate > 0:
            raise ValueError(f"rate must be positive, got {self.rate!r}")
        if not self.dark_rate >= 0:
            raise ValueError(f"dark_rate must be >= 0, got {self.dark_rate!r}")

    @property
    def kind(self) -> str:
        return "poisson" if self.sampler is None else "custom"

    @property
    def total_rate(self) -> float | None:
        if self.rate is None:
            return None
        return self.rate + self.dark_rate


@dataclass
class EventSequence:
    """Sorted carrier arrival times on [0, duration].

    ``origin`` tags each event with the stream it came from (0 for a single
    generated stream); it orders simultaneous events after a merge.
    """

    times: np.ndarray
    duration: float
    source_rate: float | None = None
    seed: int | None = None
    origin: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.times = np.ascontiguousarray(self.times, dtype=np.float64)
        if self.origin is None:
            self.origin = np.zeros(self.times.size, dtype=np.int32)
        else:
            self.origin = np.asarray(self.origin, dtype=np.int32)
        if not self.duration > 0:
            raise ValueError(f"duration must be positive, got {self.duration!r}")
        if self.times.ndim != 1 or self.origin.shape != self.times.shape:
            raise ValueError("times and origin must be matching 1-d arrays")
        if self.times.size:
            if self.times[0] < 0 or self.times[-1] > self.duration:
                raise ValueError("event times must lie in [0, duration]")
            if np.any(np.diff(self.times) < 0):
                raise ValueError("event times must be sorted")

    def __len__(self):
        return self.times.size

    @property
    def empirical_rate(self) -> float:
        return self.times.size / self.duration


def _cumulative_arrivals(rng, draw, duration, expected):
    """Accumulate waiting times from ``draw(n)`` until the running sum passes ``duration``."""
    chunks = []
    t = 0.0
    block = max(16, int(expected + 6.0 * math.sqrt(expected) + 16))
    while True:
        arrivals = t + np.cumsum(draw(block))
        stop = np.searchsorted(arrivals, duration, side="right")
        chunks.append(arrivals[:stop])
        if stop < block:
            break
        t = arrivals[-1]
        block = max(16, block // 4)
    return np.concatenate(chunks)


def generate(model: SourceModel, duration: float, seed: int) -> EventSequence:
    """Draw an arrival sequence by summing waiting times until ``duration`` is exceeded.

    For a Poisson source the photon and dark streams are generated as one
    Poisson stream of the summed rate.
    """
    if not duration > 0:
        raise ValueError(f"duration must be positive, got {duration!r}")
    rng = make_rng(seed)
    if model.sampler is None:
        rate = model.rate + model.dark_rate
        times = _cumulative_arrivals(rng, lambda n: rng.exponential(1.0 / rate, n), duration, rate * duration)
        return EventSequence(times, duration, source_rate=rate, seed=seed)

    def draw(n):
        w = np.asarray(model.sampler(rng, n), dtype=np.float64)
        if w.shape != (n,) or np.any(w < 0):
            raise ValueError("custom sampler must return n non-negative waiting times")
        return w

    expected = (model.rate or 0.0) * duration
    times = _cumulative_arrivals(rng, draw, duration, expected)
    seq = EventSequence(times, duration, source_rate=model.rate, seed=seed)
    if model.dark_rate > 0:
        dark_rate = model.dark_rate
        dark = _cumulative_arrivals(rng, lambda n: rng.exponential(1.0 / dark_rate, n), duration, dark_rate * duration)
        seq = merge(seq, EventSequence(dark, duration, source_rate=dark_rate))
        seq.seed = seed
    return seq


def merge(a: EventSequence, b: EventSequence) -> EventSequence:
    """Sorted union of two sequences; ties keep ``a`` before ``b``."""
    if a.duration != b.duration:
        raise ValueError(f"cannot merge sequences of duration {a.duration} and {b.duration}")
    times = np.concatenate([a.times, b.times])
    origin = np.concatenate([a.origin, b.origin + (a.origin.max(initial=-1) + 1)])
    order = np.lexsort((np.arange(times.size), times))
    rate = None
    if a.source_rate is not None and b.source_rate is not None:
        rate = a.source_rate + b.source_rate
    return EventSequence(times[order], a.duration, source_rate=rate, seed=a.seed, origin=origin[order])


def poisson_times(rng: np.random.Generator, rate: float, duration: float) -> np.ndarray:
    """Poisson arrival times from an existing generator (zero rate gives no events)."""
    if rate <= 0:
        return np.empty(0)
    return _cumulative_arrivals(rng, lambda n: rng.exponential(1.0 / rate, n), duration, rate * duration)


def write_csv(seq: EventSequence, path) -> None:
    """Two-column CSV (index, time_seconds) with seed and rate in a comment header."""
    lines = [
        f"# seed={seq.seed} source_rate={seq.source_rate!r} duration={seq.duration!r} rng={RNG_NAME}",
        "index,time_seconds",
    ]
    lines.extend(f"{i},{t:.17g}" for i, t in enumerate(seq.times.tolist()))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_csv(path) -> EventSequence:
    meta = {}
    times = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for item in line[1:].split():
                    key, _, value = item.partition("=")
                    meta[key] = value
                continue
            if line.startswith("index"):
                continue
            _, t = line.split(",")
            times.append(float(t))
    if "duration" not in meta:
        raise ValueError(f"{path}: missing duration in header")

    def _num(value, cast):
        return None if value in (None, "None") else cast(value)

    return EventSequence(
        np.array(times, dtype=np.float64),
        float(meta["duration"]),
        source_rate=_num(meta.get("source_rate"), float),
        seed=_num(meta.get("seed"), int),
    )
