import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from quartet.errors import NoStopbandError, ValidationError
from quartet.filters import (LineProfile, abcd_cell, abcd_to_s, cascade_and_sparams,
                             stopband_report)

PERIOD = 14e-3
CENTER = 4.5e9
SWEEP = 2 * np.pi * np.linspace(1e9, 9e9, 1601)


def charge_line(n=5, **kw):
    return LineProfile.for_center(CENTER, PERIOD, n, 20.0, 100.0, **kw)


def test_abcd_cell_limits():
    v, ell = 1e8, 1e-3
    assert np.allclose(abcd_cell(50.0, v, ell, 0.0), np.eye(2))
    # 40 resolved cells add up to beta*l = pi
    w = np.pi * v / (40 * ell)
    total = np.linalg.multi_dot([abcd_cell(50.0, v, ell, w)] * 40)
    assert np.allclose(total, -np.eye(2), atol=1e-12)


def test_abcd_determinant():
    w = 2 * np.pi * np.linspace(0, 5e9, 11)
    m = abcd_cell(37.0, 1.2e8, 1e-4, w)
    assert np.allclose(np.linalg.det(m), 1.0, atol=1e-13)


def test_abcd_resolution_rejected():
    with pytest.raises(ValidationError):
        abcd_cell(50.0, 1e8, 1e-2, 2 * np.pi * 5e9)
    with pytest.raises(ValidationError):
        cascade_and_sparams(charge_line(cells_per_period=4), SWEEP)


def test_uniform_line_transparent():
    prof = LineProfile.for_center(CENTER, PERIOD, 5, 50.0, 50.0)
    tp = cascade_and_sparams(prof, SWEEP)
    assert np.abs(tp.s21_db).max() < 1e-10


def test_matched_s_of_thru():
    s = abcd_to_s(np.eye(2, dtype=complex), 50.0)
    assert np.allclose(s, [[0, 1], [1, 0]])


def test_profile_hits_port_impedance_at_boundaries():
    prof = charge_line()
    x = np.arange(6) * PERIOD
    assert np.allclose(prof.impedance(x), 50.0)
    assert prof.impedance(np.linspace(0, PERIOD, 1001)).min() == pytest.approx(20.0, rel=1e-4)


def test_charge_line_rejection():
    tp = cascade_and_sparams(charge_line(), SWEEP)
    assert tp.max_s21_db(4e9, 5e9) <= -40.0
    rep = stopband_report(tp)
    assert rep.width > 1e9


def test_flux_line_rejection():
    tp = cascade_and_sparams(charge_line(2), SWEEP)
    assert tp.max_s21_db(4e9, 5e9) == pytest.approx(-15.0, abs=3.0)


def test_weak_modulation_centre():
    prof = LineProfile.small_modulation(0.05, CENTER, PERIOD, 40)
    tp = cascade_and_sparams(prof, 2 * np.pi * np.linspace(3e9, 6e9, 3001))
    rep = stopband_report(tp)
    assert rep.center == pytest.approx(CENTER, rel=0.01)
    assert not rep.edge_clipped


def test_no_modulation_has_no_stopband():
    prof = LineProfile.small_modulation(0.0, CENTER, PERIOD, 5)
    with pytest.raises(NoStopbandError):
        stopband_report(cascade_and_sparams(prof, SWEEP))


def test_clipped_edge_warns():
    tp = cascade_and_sparams(charge_line(), 2 * np.pi * np.linspace(4.2e9, 4.8e9, 101))
    with pytest.warns(UserWarning):
        rep = stopband_report(tp)
    assert rep.edge_clipped


def test_tabulated_profile_matches_sinusoid():
    ref = charge_line()
    x = np.arange(ref.cells_per_period) * ref.cell_length
    tab = LineProfile(ref.period, ref.n_periods, ref.z_min, ref.z_max, ref.v,
                      table=tuple(ref.impedance(x)), cells_per_period=ref.cells_per_period)
    a = cascade_and_sparams(ref, SWEEP).s21_db
    b = cascade_and_sparams(tab, SWEEP).s21_db
    assert np.abs(a - b).max() < 1.0


def test_profile_validation():
    with pytest.raises(ValidationError):
        LineProfile(PERIOD, 5, 100.0, 20.0, 1e8)
    with pytest.raises(ValidationError):
        LineProfile.small_modulation(1.2, CENTER, PERIOD, 5)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(5.0, 200.0), min_size=1, max_size=12), st.floats(0.1e9, 8e9))
def test_lossless_unitarity(zs, f):
    w = np.array([2 * np.pi * f])
    total = np.eye(2, dtype=complex)[None]
    for z in zs:
        total = total @ abcd_cell(z, 1.2e8, 2e-4, w)
    s = abcd_to_s(total, 50.0)[0]
    assert np.allclose(s.conj().T @ s, np.eye(2), atol=1e-10)
