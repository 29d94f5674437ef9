import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from apdcoinc import lut
from apdcoinc.coincidence import (
    CoincidenceMeasurement,
    accidentals_corrected,
    accidentals_naive,
    correct,
    correct_with_eta,
)
from apdcoinc.lut import DutyCycleTable

rates = st.floats(0.0, 1e7)
widths = st.floats(0.0, 1e-6)
etas = st.floats(1e-3, 1.0)


def test_worked_example():
    assert accidentals_naive(1e5, 1e5, 50e-9, 50e-9) == pytest.approx(1e3, rel=1e-15)
    assert accidentals_naive(0.0, 1e5, 50e-9, 50e-9) == 0.0


@given(rates, rates, widths, widths)
def test_unit_duty_cycle_reduces_to_naive(s1, s2, t1, t2):
    assert accidentals_corrected(s1, s2, t1, t2, 1.0, 1.0) == accidentals_naive(s1, s2, t1, t2)


@given(rates, rates, widths, widths)
def test_half_duty_cycle_doubles(s1, s2, t1, t2):
    assert accidentals_corrected(s1, s2, t1, t2, 0.5, 0.5) == pytest.approx(2 * accidentals_naive(s1, s2, t1, t2), rel=1e-14)


@given(rates, rates, widths, widths, etas, etas)
def test_swap_symmetry(s1, s2, t1, t2, e1, e2):
    assert accidentals_naive(s1, s2, t1, t2) == accidentals_naive(s2, s1, t2, t1)
    a = accidentals_corrected(s1, s2, t1, t2, e1, e2)
    b = accidentals_corrected(s2, s1, t2, t1, e2, e1)
    assert a == pytest.approx(b, rel=1e-14)


@given(st.floats(1.0, 1e6), st.floats(1.0, 1e6), st.floats(1e-9, 1e-6), st.floats(1e-9, 1e-6), etas, etas, st.floats(0.1, 10.0))
def test_scaling(s1, s2, t1, t2, e1, e2, k):
    base = accidentals_corrected(s1, s2, t1, t2, e1, e2)
    assert accidentals_corrected(k * s1, k * s2, t1, t2, e1, e2) == pytest.approx(k * k * base, rel=1e-12)
    assert accidentals_corrected(s1, s2, k * t1, k * t2, e1, e2) == pytest.approx(k * base, rel=1e-12)


@given(st.floats(1.0, 1e6), st.floats(1.0, 1e6), st.floats(1e-9, 1e-6), st.floats(1e-9, 1e-6), st.floats(1e-3, 0.999), etas)
def test_correction_strictly_larger_below_unit_eta(s1, s2, t1, t2, e1, e2):
    assert accidentals_corrected(s1, s2, t1, t2, e1, e2) > accidentals_naive(s1, s2, t1, t2)


@pytest.mark.parametrize("eta", [0.0, -0.1, 1.01, float("nan")])
def test_eta_outside_unit_interval_rejected(eta):
    with pytest.raises(ValueError):
        accidentals_corrected(1.0, 1.0, 1e-9, 1e-9, eta, 0.5)


@pytest.mark.parametrize("args", [(-1.0, 1.0, 1e-9, 1e-9), (1.0, 1.0, -1e-9, 1e-9), (float("inf"), 1.0, 1e-9, 1e-9)])
def test_negative_inputs_rejected(args):
    with pytest.raises(ValueError):
        accidentals_naive(*args)


def test_net_rate_zero_when_raw_equals_accidentals():
    m = CoincidenceMeasurement(1e5, 2e5, 40e-9, 60e-9, 0.0, 15.0, 15.0)
    acc = accidentals_corrected(1e5, 2e5, 40e-9, 60e-9, 0.8, 0.7)
    res = correct_with_eta(CoincidenceMeasurement(1e5, 2e5, 40e-9, 60e-9, acc), 0.8, 0.7)
    assert res.c_corrected == 0.0 and not res.negative
    low = correct_with_eta(m, 0.8, 0.7)
    assert low.negative and low.c_corrected == -low.c_acc_corrected
    d = low.to_dict()
    assert d["negative"] is True and d["c_net_naive"] == pytest.approx(-low.c_acc_naive)


def test_zero_singles_pass_through():
    t = DutyCycleTable([10.0, 20.0], [1e3, 1e5], [[0.8, 0.6], [0.9, 0.7]])
    res = correct(CoincidenceMeasurement(0.0, 5e4, 50e-9, 50e-9, 12.0, 15.0, 15.0), t)
    assert res.c_acc_naive == res.c_acc_corrected == 0.0
    assert res.c_corrected == 12.0


def test_pipeline_matches_hand_composition(default_table):
    m = CoincidenceMeasurement(1.2e5, 8e4, 50e-9, 30e-9, 900.0, 15.0, 17.0)
    res = correct(m, default_table)
    e1 = lut.lookup_eta(default_table, 15.0, 1.2e5)
    e2 = lut.lookup_eta(default_table, 17.0, 8e4)
    assert (res.eta1, res.eta2) == (e1, e2)
    assert res.c_acc_corrected == accidentals_corrected(1.2e5, 8e4, 50e-9, 30e-9, e1, e2)
    assert res.c_corrected == 900.0 - res.c_acc_corrected
    assert res.c_acc_naive == accidentals_naive(1.2e5, 8e4, 50e-9, 30e-9)


def test_second_table_used_for_second_arm():
    t1 = DutyCycleTable([10.0, 20.0], [1e3, 1e5], [[0.8, 0.6], [0.9, 0.7]])
    t2 = DutyCycleTable([10.0, 20.0], [1e3, 1e5], [[0.5, 0.4], [0.5, 0.4]])
    res = correct(CoincidenceMeasurement(1e3, 1e3, 1e-8, 1e-8, 1.0, 10.0, 10.0), t1, t2)
    assert (res.eta1, res.eta2) == (0.8, 0.5)


def test_lookup_errors_name_the_arm():
    t = DutyCycleTable([10.0, 20.0], [1e3, 1e5], [[0.8, 0.6], [0.9, 0.7]])
    with pytest.raises(lut.LUTRangeError, match="detector 2") as info:
        correct(CoincidenceMeasurement(1e4, 1e4, 1e-8, 1e-8, 1.0, 15.0, 25.0), t)
    assert info.value.arm == 2
    with pytest.raises(lut.SaturationAmbiguityError):
        correct(CoincidenceMeasurement(2e5, 1e4, 1e-8, 1e-8, 1.0, 15.0, 15.0), t)
    with pytest.raises(ValueError, match="v_e1"):
        correct(CoincidenceMeasurement(1e4, 1e4, 1e-8, 1e-8, 1.0), t)


def test_from_counts():
    m = CoincidenceMeasurement.from_counts(50, 2e4, 3e4, 0.5, 1e-8, 2e-8)
    assert (m.c_raw, m.s1, m.s2) == (100.0, 4e4, 6e4)
    with pytest.raises(ValueError):
        CoincidenceMeasurement.from_counts(1, 1, 1, 0.0, 1e-8, 1e-8)


def test_randomized_reduction_sweep():
    rng = np.random.default_rng(0)
    s = rng.uniform(0, 1e7, (10_000, 2))
    tau = rng.uniform(0, 1e-6, (10_000, 2))
    for (s1, s2), (t1, t2) in zip(s.tolist(), tau.tolist()):
        assert accidentals_corrected(s1, s2, t1, t2, 1.0, 1.0) == accidentals_naive(s1, s2, t1, t2)
