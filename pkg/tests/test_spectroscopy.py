import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import eigh
from scipy.optimize import minimize

from conftest import KAPPA_B, XI_B
from quartet.circuit import TWO_PI, FluxBias, ModeSpec, SquidParams, reference_params
from quartet.errors import ValidationError
from quartet.fock import FockSpace
from quartet.lindblad import DissipatorSpec, LindbladModel
from quartet.rwa import DispersiveTable, DriveSpec, PumpSpec, build_rwa_hamiltonian
from quartet.spectroscopy import (CutSpec, classical_curvature, dressed_frequencies, local_minima,
                                  matched_filter_score, mode_ratios, quantum_curvature,
                                  reflection_spectrum, saddle_hessian, saddle_splitting,
                                  steady_buffer_field)


def empty_cavity(xi, delta=0.0, m_dim=30):
    h = build_rwa_hamiltonian(DispersiveTable.zeros(2, m_dim), 0.0, PumpSpec(0.0),
                              DriveSpec(xi, delta), n_dim=2, m_dim=m_dim)
    states = tuple((0, m) for m in range(m_dim))
    return LindbladModel(h, (DissipatorSpec("mode_lowering", KAPPA_B, "b"),), states)


def test_empty_cavity_reflection():
    xi = TWO_PI * 50e3 * np.exp(0.4j)
    drive = DriveSpec(xi, 0.0)
    deltas = TWO_PI * np.array([-50e6, -1e6, 0.0, 0.3e6, 50e6])
    r = reflection_spectrum(empty_cavity(xi), drive, deltas, KAPPA_B)
    assert r[2] == pytest.approx(-1.0, abs=1e-9)
    assert np.allclose(np.abs(r), 1.0, atol=1e-9)
    assert abs(r[0] - 1) < 0.05 and abs(r[-1] - 1) < 0.05


def test_reflection_needs_drive():
    with pytest.raises(ValidationError):
        reflection_spectrum(empty_cavity(0.0), DriveSpec(0.0), [0.0], KAPPA_B)


def test_adjoint_field_matches_full(six_level):
    m = six_level(TWO_PI * 100e3, XI_B)
    deltas = TWO_PI * np.linspace(-2e6, 2e6, 9)
    full = steady_buffer_field(m, DriveSpec(XI_B), deltas, "full")
    adj = steady_buffer_field(m, DriveSpec(XI_B), deltas, "adjoint")
    assert np.abs(full - adj).max() < 1e-8 * np.abs(full).max()


@pytest.mark.parametrize("g_khz,n_min", [(20.0, 1), (185.0, 2)])
def test_line_splitting(six_level, g_khz, n_min):
    m = six_level(TWO_PI * g_khz * 1e3, XI_B)
    deltas = TWO_PI * np.linspace(-3e6, 3e6, 241)
    r = reflection_spectrum(m, DriveSpec(XI_B), deltas, KAPPA_B)
    assert len(local_minima(np.abs(r))) == n_min


def test_classical_curvature_examples():
    w = [TWO_PI * 1e9, TWO_PI * 2e9, TWO_PI * 3e9]
    r = [1.0, 1.0, 0.0]
    assert np.all(classical_curvature(w, r, np.pi / 2) == 0)
    assert classical_curvature(w, r, 0.0, "SP2")[0] == pytest.approx(TWO_PI * 2e9)
    assert classical_curvature(w, r, 0.0, "SP1")[0] == pytest.approx(TWO_PI * 2e9)
    assert classical_curvature(w, r, np.pi / 4, "SP1")[0] == pytest.approx(
        TWO_PI * 1e9 * -1 * np.cos(np.pi / 4) * (-2 * np.cos(np.pi / 4) + np.sin(np.pi / 4)))


def test_dressed_frequencies_limits():
    assert dressed_frequencies(3.0, 5.0, 0.0) == (5.0, 3.0)
    wp, wm = dressed_frequencies(2.0, 2.0, 2.0)
    assert wp**2 == pytest.approx(8.0) and wm == pytest.approx(0.0, abs=1e-7)


def test_dressed_frequencies_match_circuit_eigenproblem():
    ca, cb, la, lb, lf = 1.2, 0.7, 2.0, 1.5, 6.0
    K = np.array([[1 / la + 1 / lf, -1 / lf], [-1 / lf, 1 / lb + 1 / lf]])
    C = np.diag([ca, cb])
    w2 = eigh(K, C, eigvals_only=True)
    wa = np.sqrt(K[0, 0] / ca)
    wb = np.sqrt(K[1, 1] / cb)
    wf = np.sqrt(1 / (lf * np.sqrt(ca * cb)))
    wp, wm = dressed_frequencies(wa, wb, wf)
    assert np.allclose(np.sqrt(np.sort(w2)), [wm, wp], rtol=1e-12)


def test_saddle_hessian_trivial():
    hess, x = saddle_hessian(1.0, 2.0, 0.3, 0.0, 5.0)
    assert np.allclose(x, 0) and hess[0, 1] == 0
    hess, _ = saddle_hessian(1.0, 2.0, np.pi / 2, 0.1, 5.0)
    assert abs(hess[0, 1]) < 1e-15


def full_potential(x, e_la, e_lb, e_s, eps, theta):
    # SP2-centred potential with cut offsets (eps cos t, eps sin t)
    ps = -np.pi / 2 + eps * np.cos(theta)
    pd = -np.pi / 2 + eps * np.sin(theta)
    phi = x[0] + x[1]
    return 0.5 * e_la * x[0] ** 2 + 0.5 * e_lb * x[1] ** 2 - e_s * np.cos(ps) * np.cos(phi - pd)


def test_saddle_minimum_matches_potential():
    p = reference_params(readout=False)
    e_s = p.squid.E_sigma
    ra, rb = mode_ratios(p)
    e_la, e_lb = e_s / ra, e_s / rb
    theta = 0.6
    errs = []
    for eps in (4e-3, 8e-3):
        _, guess = saddle_hessian(ra, rb, theta, eps, e_s)
        res = minimize(full_potential, guess, args=(e_la, e_lb, e_s, eps, theta),
                       method="BFGS", options={"gtol": 1e-14 * e_s})
        errs.append(np.abs(res.x - guess).max())
    # third-order remainder: doubling eps scales the error by ~8
    assert errs[1] / errs[0] == pytest.approx(8.0, rel=0.15)


def test_quantum_curvature_zero_without_nonlinearity():
    modes = (ModeSpec("a", TWO_PI * 4.13e9, 0.405, 6), ModeSpec("b", TWO_PI * 6.94e9, 0.312, 4))
    from quartet.circuit import CircuitParams

    p = CircuitParams(modes, SquidParams(1e-6))
    res = quantum_curvature(p, CutSpec.symmetric(0.0, 0.02, 9))
    # eigenvalue round-off only: relative to the mode frequency
    for m in modes:
        assert abs(res.curvature[m.label]) < 1e-9 * m.omega


def test_reference_quantum_and_classical_disagree():
    p = reference_params({"a": 14, "b": 8, "r": 3})
    cut = CutSpec.symmetric(0.0, 0.01, 9)
    q = quantum_curvature(p, cut).curvature
    c = classical_curvature([m.omega for m in p.modes], mode_ratios(p), 0.0)
    rel = [abs(q[m.label] / c[i] - 1) for i, m in enumerate(p.modes)]
    assert max(rel) > 0.05


def test_cut_validation():
    with pytest.raises(ValidationError):
        CutSpec(0.0, (0.0, 0.1, 0.2, 0.3))
    with pytest.raises(ValidationError):
        CutSpec.symmetric(0.0, saddle="SP3")


def test_saddle_splitting_examples():
    assert saddle_splitting(TWO_PI * 4.13e9, 0.0, 1.0) == 0.0
    m = ModeSpec("a", TWO_PI * 4.13e9, 0.405)
    d = saddle_splitting(m.omega, TWO_PI * 0.35e6, m.E_L)
    assert d / TWO_PI == pytest.approx(115e3, rel=0.01)
    for m in reference_params().modes:
        assert saddle_splitting(m.omega, TWO_PI * 0.35e6, m.E_L) / m.omega < 1e-4


def test_matched_filter_examples():
    t = np.linspace(0, 1e-6, 2001)
    s = np.ones_like(t) * (0.3 + 0.4j)
    zero = np.zeros_like(t)
    assert matched_filter_score(s, s, s, zero, 200e-9, t) == 0.0
    score = matched_filter_score(s, zero, s, zero, 200e-9, t)
    assert score == pytest.approx(0.5 * np.sqrt(5), rel=1e-12)
    assert matched_filter_score(3 * s, zero, s, zero, 200e-9, t) == pytest.approx(3 * score)
    with pytest.raises(ValidationError):
        matched_filter_score(s, s, s, s, 200e-9, t)


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 2 * np.pi), st.integers(0, 1000))
def test_matched_filter_phase_invariance(angle, seed):
    rng = np.random.default_rng(seed)
    x = [rng.normal(size=50) + 1j * rng.normal(size=50) for _ in range(4)]
    u = np.exp(1j * angle)
    a = matched_filter_score(*x, 1.0)
    b = matched_filter_score(*(u * v for v in x), 1.0)
    assert b == pytest.approx(a, rel=1e-9, abs=1e-12)


def test_saddle_splitting_converges_at_small_zpf():
    from quartet.spectroscopy import fock_pair, transition_frequency

    for scale, tol in ((0.5, 0.07), (0.2, 0.012)):
        p = reference_params().scaled_zpf(scale)
        ops = p.operators()
        H = [p.hamiltonian(FluxBias.saddle(s), operators=ops).data for s in ("SP1", "SP2")]
        for m in p.modes:
            f = [transition_frequency(h, ops.space, *fock_pair(p, m.label)) for h in H]
            d = saddle_splitting(m.omega, p.squid.E_delta, m.E_L)
            assert (f[0] - f[1]) / d == pytest.approx(1.0, abs=tol)
