"""Effective duty cycle of saturated Geiger-mode APDs and accidental-coincidence correction."""

from .coincidence import (
    CoincidenceMeasurement,
    CorrectionResult,
    accidentals_corrected,
    accidentals_naive,
    correct,
)
from .detector import DetectorTrace, DutyCycleEstimate, estimate, eta_area, eta_fractional, rate_sweep, simulate
from .events import EventSequence, SourceModel, generate, merge
from .experiment import PairSourceModel, count_overlaps, generate_fringe_dataset, measure_accidentals
from .fringe import FringeDataset, VisibilityFit, analyze, fit_visibility
from .lut import DutyCycleTable, lookup_eta
from .recovery import (
    DetectorParams,
    avalanche_probability,
    detection_probability,
    excess_voltage,
    pulse_height_mean,
    sense_probability,
    threshold_crossing_time,
)

__version__ = "0.1.0"
