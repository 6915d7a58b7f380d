"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line."""
import warnings
from dataclasses import replace

import numpy as np
import pytest

from conftest import ACCEPTANCE, KAPPA_B, KAPPA_PHI, XI_B, taylor_trig
from quartet.circuit import TWO_PI, FluxBias, reference_params
from quartet.estimation import (SweepContext, exponential_deviation, fit_g4_sweep,
                                memory_transitions)
from quartet.filters import LineProfile, cascade_and_sparams, stopband_report
from quartet.fock import FockSpace, phase_operator, trig_of_phase
from quartet.lindblad import (adiabatic_gamma4, damped_rabi_rate, default_gammas, evolve,
                              extract_decay_rate, population_decay_rate, reduce_three_level)
from quartet.rwa import DriveSpec, PumpSpec, g4_rate
from quartet.spectroscopy import (CutSpec, classical_curvature, fock_pair, local_minima,
                                  mode_ratios, quantum_curvature, reflection_spectrum,
                                  saddle_splitting, steady_buffer_field, transition_frequency)


def record(n: int, ok: bool, detail: str) -> None:
    ACCEPTANCE.append((n, bool(ok), detail))
    print(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def test_criterion_01_g4_anchor():
    p = reference_params()
    g = g4_rate(p.squid, 0.405, 0.312, PumpSpec(0.0175)) / TWO_PI
    record(1, 185e3 <= g <= 195e3, f"g4/2pi = {g / 1e3:.2f} kHz")


def test_criterion_02_saturation():
    g4s = TWO_PI * np.linspace(0, 300e3, 50)
    rates = np.array([extract_decay_rate(reduce_three_level(g * np.sqrt(24), KAPPA_B),
                                         allow_zero=True) for g in g4s])
    oracle = np.array([damped_rabi_rate(g, KAPPA_B) for g in g4s])
    nz = oracle > 0
    err = np.abs(rates[nz] / oracle[nz] - 1).max()
    exact_zero = rates[~nz].max() == 0 if (~nz).any() else True
    weak = g4s[(g4s > 0) & (g4s <= TWO_PI * 20e3)]
    weak_err = max(abs(extract_decay_rate(reduce_three_level(g * np.sqrt(24), KAPPA_B))
                       / (96 * g**2 / KAPPA_B) - 1) for g in weak)
    strong = rates[g4s >= TWO_PI * 250e3].min() / (KAPPA_B / 2)
    ok = err < 1e-9 and exact_zero and weak_err < 0.02 and strong >= 0.95
    record(2, ok, f"max rel err {err:.1e}, weak-coupling err {weak_err:.2%}, "
                  f"min strong Gamma/(kappa_b/2) {strong:.4f}")


def test_criterion_03_model_reduction(six_level):
    gam = default_gammas()
    worst0, worst1 = 0.0, 0.0
    for g in TWO_PI * np.array([20e3, 50e3, 100e3, 185e3]):
        full0 = population_decay_rate(six_level(g, kappa_phi=0.0), (4, 0))
        red0 = extract_decay_rate(reduce_three_level(g * np.sqrt(24), KAPPA_B, gam[3]))
        full1 = population_decay_rate(six_level(g), (4, 0))
        red1 = extract_decay_rate(reduce_three_level(g * np.sqrt(24), KAPPA_B, gam[3], KAPPA_PHI))
        worst0 = max(worst0, abs(full0 / red0 - 1))
        worst1 = max(worst1, abs(full1 / red1 - 1))
    record(3, worst0 < 1e-6 and worst1 < 0.01,
           f"no dephasing {worst0:.1e} (< 1e-6), with dephasing {worst1:.1e} (< 1e-2)")


def test_criterion_04_non_exponential_onset(six_level):
    times = np.linspace(0, 10e-6, 401)
    dev = {}
    for g_khz in (50, 185):
        m = six_level(TWO_PI * g_khz * 1e3)
        proj = m.projector((4, 0))
        pop = evolve(m, proj, times, {"P": proj}).expectations["P"].real
        dev[g_khz] = exponential_deviation(times, pop)
    record(4, dev[50] < 0.02 and dev[185] > 0.05,
           f"max residual / initial: 50 kHz {dev[50]:.2%} (< 2%), 185 kHz {dev[185]:.2%} (> 5%)")


def test_criterion_05_steady_state(six_level):
    deltas = TWO_PI * np.linspace(-3e6, 3e6, 101)
    drive = DriveSpec(XI_B)
    worst = 0.0
    for g in TWO_PI * np.array([20e3, 100e3, 185e3]):
        m = six_level(g, XI_B)
        full = steady_buffer_field(m, drive, deltas, "full")
        adj = steady_buffer_field(m, drive, deltas, "adjoint")
        worst = max(worst, np.abs(full - adj).max())
    n_min = {}
    for g_khz in (20, 185):
        r = reflection_spectrum(six_level(TWO_PI * g_khz * 1e3, XI_B), drive, deltas, KAPPA_B)
        n_min[g_khz] = len(local_minima(np.abs(r)))
    ok = worst < 1e-8 and n_min[20] == 1 and n_min[185] == 2
    record(5, ok, f"max |<b> full - adjoint| {worst:.1e}, minima at 20 kHz {n_min[20]}, "
                  f"at 185 kHz {n_min[185]}")


def test_criterion_06_anharmonicity():
    p = reference_params(readout=False)
    f = memory_transitions(p, FluxBias.saddle("SP2"), 7)
    gaps = np.diff(f)[:5] / TWO_PI
    ok = np.all(gaps > 0) and np.all(np.diff(gaps) < 0) and 1e6 <= gaps[0] <= 10e6
    record(6, ok, "gaps MHz " + ", ".join(f"{x / 1e6:.3f}" for x in gaps)
           + " (positive, decreasing, first in 1-10 MHz)")


def test_criterion_07_curvature_agreement():
    p = reference_params().scaled_zpf(0.2)
    # non-idealities absent from the classical model are switched off
    p = replace(p, squid=replace(p.squid, E_delta=0.0, eps_L=np.inf), chains=None)
    ops = p.operators()
    omegas = [m.omega for m in p.modes]
    ratios = mode_ratios(p)
    thetas = [0.0, np.pi / 4, np.pi / 2, 3 * np.pi / 4]
    rows = []
    for s in ("SP1", "SP2"):
        for t in thetas:
            q = quantum_curvature(p, CutSpec.symmetric(t, 0.04, 21, s), operators=ops).curvature
            rows.append((s, t, [q[m.label] for m in p.modes], classical_curvature(omegas, ratios, t, s)))
    # per-mode scale: the largest classical curvature over the cuts
    scale = np.max([np.abs(c) for *_, c in rows], axis=0)
    worst_rel, worst_zero, exact = 0.0, 0.0, True
    for s, t, q, c in rows:
        for i in range(len(omegas)):
            if t == np.pi / 2:
                exact &= c[i] == 0.0
                worst_zero = max(worst_zero, abs(q[i]) / scale[i])
            else:
                worst_rel = max(worst_rel, abs(q[i] / c[i] - 1))
    ok = worst_rel < 0.05 and worst_zero < 0.05 and exact
    record(7, ok, f"worst relative difference {worst_rel:.2%}, pi/2 quantum/scale "
                  f"{worst_zero:.1e}, classical exactly 0: {exact}")


def test_criterion_08_saddle_splitting():
    p = reference_params()
    ops = p.operators()
    H = {s: p.hamiltonian(FluxBias.saddle(s), operators=ops).data for s in ("SP1", "SP2")}
    rel, match = [], []
    for m in p.modes:
        d = saddle_splitting(m.omega, p.squid.E_delta, m.E_L)
        f = {s: transition_frequency(H[s], ops.space, *fock_pair(p, m.label)) for s in H}
        rel.append(d / m.omega)
        match.append(abs(f["SP1"] - f["SP2"]) / d)
    ok = max(rel) < 1e-4 and all(abs(x - 1) < 0.1 for x in match)
    record(8, ok, f"max dw/w {max(rel):.1e} (< 1e-4), diagonalization/formula "
                  + ", ".join(f"{x:.3f}" for x in match) + " (within 10%)")


def test_criterion_09_filters():
    sweep = TWO_PI * np.linspace(1e9, 9e9, 1601)
    charge = cascade_and_sparams(LineProfile.for_center(4.5e9, 14e-3, 5, 20.0, 100.0), sweep)
    flux = cascade_and_sparams(LineProfile.for_center(4.5e9, 14e-3, 2, 20.0, 100.0), sweep)
    c_db = charge.max_s21_db(4e9, 5e9)
    f_db = flux.max_s21_db(4e9, 5e9)
    rep = stopband_report(charge)
    unit = max(charge.unitarity_error(), flux.unitarity_error())
    ok = (c_db <= -40 and abs(f_db + 15) <= 3 and abs(rep.center - 4.5e9) <= 0.2e9
          and rep.width > 1e9 and unit < 1e-9)
    record(9, ok, f"charge {c_db:.2f} dB, flux {f_db:.2f} dB, centre {rep.center / 1e9:.3f} GHz, "
                  f"width {rep.width / 1e9:.2f} GHz, unitarity {unit:.1e}")


def test_criterion_10_operator_oracle():
    worst, vac = 0.0, 0.0
    for z in (0.1, 0.405, 0.8):
        space = FockSpace((40,), ("a",))
        phi = phase_operator(space, (z,))
        mask = space.inner_mask()
        for kind in ("cos", "sin"):
            got = trig_of_phase(phi, kind).data
            ref = taylor_trig(phi.data, kind)
            worst = max(worst, np.abs(got - ref)[np.ix_(mask, mask)].max())
        c = trig_of_phase(phi, "cos").data
        vac = max(vac, abs(c[0, 0] - np.exp(-z**2 / 2)))
    record(10, worst < 1e-8 and vac < 1e-8, f"eig vs series {worst:.1e}, vacuum {vac:.1e}")


@pytest.fixture(scope="module")
def sweep_ctx(chi_reference):
    return SweepContext(chi_reference, KAPPA_B, default_gammas())


def _datasets(ctx, g4s, noise, rng):
    times = np.linspace(0, 8e-6, 161)
    deltas = TWO_PI * np.linspace(-3e6, 3e6, 61)
    decays, spectra = [], []
    for g in g4s:
        y = ctx.decay_model(g, KAPPA_PHI, 1.0, times)
        r = ctx.spectrum_model(g, KAPPA_PHI, 1.0, XI_B, deltas)
        if noise:
            y = y + noise * rng.normal(size=y.size)
            r = r + noise * (rng.normal(size=r.size) + 1j * rng.normal(size=r.size)) / np.sqrt(2)
        decays.append((times, y))
        spectra.append((deltas, r))
    return decays, spectra


def test_criterion_11_fit_round_trips(sweep_ctx):
    g4s = TWO_PI * np.array([20e3, 50e3, 100e3, 150e3, 185e3])
    d, s = _datasets(sweep_ctx, g4s, 0.0, None)
    fit = fit_g4_sweep(d, s, sweep_ctx, verify=False)
    clean = max([abs(g / g0 - 1) for g, g0 in zip(fit.g4, g4s)]
                + [abs(fit.kappa_phi / KAPPA_PHI - 1), abs(fit.xi_b / XI_B - 1)])
    errs = []
    for seed in range(20):
        d, s = _datasets(sweep_ctx, g4s, 0.02, np.random.default_rng(seed))
        f = fit_g4_sweep(d, s, sweep_ctx, verify=False)
        errs.append(np.abs(np.array(f.g4) / g4s - 1))
    med = float(np.median(np.concatenate(errs)))
    record(11, clean < 0.01 and med < 0.05,
           f"noise-free worst {clean:.1e} (< 1%), 2% noise median g4 error {med:.2%} (< 5%)")


def test_criterion_12_adiabatic_elimination():
    g4s = TWO_PI * np.linspace(2e3, 50e3, 25)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        disc = np.array([abs(24 * adiabatic_gamma4(g, KAPPA_B)
                             / extract_decay_rate(reduce_three_level(g * np.sqrt(24), KAPPA_B)) - 1)
                         for g in g4s])
    ok = disc.max() < 0.1 and np.all(np.diff(disc) > 0)
    record(12, ok, f"discrepancy {disc[0]:.2e} -> {disc[-1]:.2%} (< 10%, monotone)")
