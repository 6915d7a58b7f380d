"""Reflection spectra, flux-map curvatures, saddle splitting and matched-filter scoring."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import trapezoid
from scipy.signal import find_peaks

from .circuit import CircuitParams, FluxBias
from .errors import NumericalError, ValidationError
from .estimation import parabola_curvature
from .lindblad import (LindbladModel, adjoint_generator, adjoint_steady_expectations,
                       build_liouvillian, closure_basis, expectation_from_basis, steady_state)
from .rwa import DriveSpec


@dataclass(frozen=True)
class CutSpec:
    """Straight cut through a saddle point: (eps_S, eps_D) = eps (cos theta, sin theta)."""

    theta: float
    epsilon_range: tuple
    saddle: str = "SP2"

    def __post_init__(self):
        eps = np.asarray(self.epsilon_range, dtype=float)
        object.__setattr__(self, "epsilon_range", tuple(eps))
        if self.saddle not in ("SP1", "SP2"):
            raise ValidationError(f"unknown saddle {self.saddle!r}")
        if len(eps) < 4:
            raise ValidationError("a cut needs at least 4 points")
        if not np.allclose(np.sort(eps), -np.sort(eps)[::-1], atol=1e-15):
            raise ValidationError("epsilon range must be symmetric about 0")
        if np.abs(eps).max() > 0.3:
            warnings.warn("cut extends beyond the small-offset regime", stacklevel=2)

    @classmethod
    def symmetric(cls, theta: float, half_width: float = 0.04, n_points: int = 21,
                  saddle: str = "SP2") -> "CutSpec":
        return cls(theta, tuple(np.linspace(-half_width, half_width, n_points)), saddle)

    def bias(self, eps: float) -> FluxBias:
        return FluxBias.saddle(self.saddle, eps * np.cos(self.theta), eps * np.sin(self.theta))


@dataclass
class CurvatureResult:
    curvature: dict
    model: str
    residuals: dict = field(default_factory=dict)


# ---------------------------------------------------------------- reflection

def _detuning_generator(model: LindbladModel) -> np.ndarray:
    """Diagonal d H / d delta = -n_a/4 - n_b on the model subspace."""
    space = model.space
    ia, ib = space.mode_index("a"), space.mode_index("b")
    occ = space.occupation_table()[model.indices]
    return np.diag(-occ[:, ia] / 4 - occ[:, ib]).astype(complex)


def _lowering_b(model: LindbladModel) -> np.ndarray:
    space = model.space
    ib = space.mode_index("b")
    occ = space.occupation_table()[model.indices]
    d = model.dim
    b = np.zeros((d, d), dtype=complex)
    for j in range(d):
        if occ[j, ib] == 0:
            continue
        target = occ[j].copy()
        target[ib] -= 1
        hits = np.nonzero(np.all(occ == target, axis=1))[0]
        if len(hits):
            b[hits[0], j] = np.sqrt(occ[j, ib])
    return b


def steady_buffer_field(model: LindbladModel, drive: DriveSpec, delta_sweep: Sequence[float],
                        method: str = "full", max_closure: int | None = None) -> np.ndarray:
    """Steady-state <b> across detunings.

    ``model`` must be built at detuning ``drive.delta``; other detunings are
    reached by adding ``(delta - drive.delta) * (-n_a/4 - n_b)`` to the
    Hamiltonian. ``method`` is ``"full"`` (Liouvillian null space) or
    ``"adjoint"`` (closure of {b} under the adjoint generator).
    """
    if method not in ("full", "adjoint"):
        raise ValidationError(f"unknown method {method!r}")
    gen = _detuning_generator(model)
    b = _lowering_b(model)
    h0 = model.hamiltonian
    out = np.empty(len(delta_sweep), dtype=complex)
    idx = model.indices
    for k, delta in enumerate(delta_sweep):
        data = h0.data.copy()
        data[np.ix_(idx, idx)] += (delta - drive.delta) * gen
        hk = type(h0)(h0.space, data, h0.unit, True)
        mk = LindbladModel(hk, model.dissipators, model.states)
        if method == "full":
            rho = steady_state(build_liouvillian(mk))
            out[k] = np.trace(b @ rho)
        else:
            basis = closure_basis(mk, [b], max_size=max_closure)
            ag = adjoint_generator(mk, basis)
            vals = adjoint_steady_expectations(ag)
            out[k] = expectation_from_basis(ag, vals, b)
    return out


def reflection_from_field(b_ss: np.ndarray, xi_b: complex, kappa_c: float) -> np.ndarray:
    """r = 1 - i kappa_c <b> / conj(xi_b)."""
    if xi_b == 0:
        raise ValidationError("reflection needs a non-zero drive")
    return 1 - 1j * kappa_c * np.asarray(b_ss) / np.conj(xi_b)


def reflection_spectrum(model: LindbladModel, drive: DriveSpec, delta_sweep: Sequence[float],
                        kappa_coupling: float, method: str = "full") -> np.ndarray:
    """Complex reflection coefficient of the buffer port versus drive detuning."""
    if kappa_coupling < 0:
        raise ValidationError("coupling rate must be non-negative")
    field_ = steady_buffer_field(model, drive, delta_sweep, method)
    return reflection_from_field(field_, drive.xi_b, kappa_coupling)


def local_minima(values: Sequence[float], prominence: float = 1e-3) -> np.ndarray:
    """Indices of interior local minima with at least the given prominence."""
    idx, _ = find_peaks(-np.asarray(values, dtype=float), prominence=prominence)
    return idx


# ---------------------------------------------------------------- curvature

def classical_curvature(omegas: Sequence[float], ratios: Sequence[float], theta: float,
                        saddle: str = "SP2") -> np.ndarray:
    """C_i = w_i r_i cos(t) ((sum r) cos(t) + sin(t)); SP1 uses r -> -r.

    ``ratios`` are r_i = E_sigma / E_L_i in the same order as ``omegas``.
    Returns d^2 w_i / d eps^2 along the cut (rad/s per rad^2).
    """
    if saddle not in ("SP1", "SP2"):
        raise ValidationError(f"unknown saddle {saddle!r}")
    w = np.asarray(omegas, dtype=float)
    r = np.asarray(ratios, dtype=float)
    if saddle == "SP1":
        r = -r
    c = np.cos(theta)
    if abs(c) < 1e-15:
        c = 0.0
    return w * r * c * (r.sum() * c + np.sin(theta))


def mode_ratios(params: CircuitParams) -> np.ndarray:
    return np.array([params.squid.E_sigma / m.E_L for m in params.modes])


def dressed_frequencies(omega_tilde_a: float, omega_tilde_b: float, omega_F: float):
    """Normal-mode frequencies of two oscillators coupled through L_F."""
    wa2, wb2 = omega_tilde_a**2, omega_tilde_b**2
    root = np.sqrt((wa2 - wb2) ** 2 + 4 * omega_F**4)
    plus, minus = (wa2 + wb2 + root) / 2, (wa2 + wb2 - root) / 2
    if minus < 0:
        raise ValidationError("negative squared frequency: coupling too strong")
    return float(np.sqrt(plus)), float(np.sqrt(minus))


def saddle_hessian(r_a: float, r_b: float, theta: float, epsilon: float, E_sigma: float):
    """Inductive Hessian [[E_La + F, F], [F, E_Lb + F]] and the potential minimum (-eps r_i cos t)."""
    if abs(epsilon) > 0.3:
        warnings.warn("offset outside the small-epsilon expansion", stacklevel=2)
    c, s = np.cos(theta), np.sin(theta)
    F = epsilon**2 * E_sigma * c * (r_a * c + r_b * c + s)
    ela, elb = E_sigma / r_a, E_sigma / r_b
    hess = np.array([[ela + F, F], [F, elb + F]])
    return hess, np.array([-epsilon * r_a * c, -epsilon * r_b * c])


def saddle_splitting(omega_i: float, E_delta: float, E_Li: float) -> float:
    """Frequency difference of a mode between the two saddles, w_i E_delta / E_L_i."""
    if E_Li <= 0:
        raise ValidationError("E_L_i must be positive")
    return float(omega_i * E_delta / E_Li)


def transition_frequency(H: np.ndarray, space, lower: Sequence[int], upper: Sequence[int]) -> float:
    """Energy difference of the eigenstates best overlapping two Fock states."""
    w, v = np.linalg.eigh(H)
    prob = np.abs(v) ** 2
    i = int(np.argmax(prob[space.index(lower)]))
    j = int(np.argmax(prob[space.index(upper)]))
    if i == j:
        raise NumericalError("both Fock states map to the same eigenstate")
    return float(w[j] - w[i])


def fock_pair(params: CircuitParams, mode: str, n_lower: int = 0, n_upper: int = 1):
    labels = [m.label for m in params.modes]
    if mode not in labels:
        raise ValidationError(f"unknown mode {mode!r}")
    lo = [0] * len(labels)
    hi = [0] * len(labels)
    lo[labels.index(mode)] = n_lower
    hi[labels.index(mode)] = n_upper
    return tuple(lo), tuple(hi)


def quantum_curvature(params: CircuitParams, cut: CutSpec, transitions: dict | None = None,
                      operators=None, fit_fraction: float = 0.5,
                      residual_tol: float = 1e-3) -> CurvatureResult:
    """Curvature of selected transitions along a cut, from exact diagonalization.

    ``transitions`` maps a name to (lower Fock tuple, upper Fock tuple); the
    default is the 0-1 transition of every mode. The parabola is fitted to the
    central ``fit_fraction`` of the cut.
    """
    if transitions is None:
        transitions = {m.label: fock_pair(params, m.label) for m in params.modes}
    ops = operators if operators is not None else params.operators()
    eps = np.asarray(cut.epsilon_range)
    freqs = {name: np.empty(len(eps)) for name in transitions}
    for k, e in enumerate(eps):
        H = params.hamiltonian(cut.bias(e), operators=ops).data
        for name, (lo, hi) in transitions.items():
            freqs[name][k] = transition_frequency(H, ops.space, lo, hi)
    half = np.abs(eps).max() * fit_fraction
    sel = np.abs(eps) <= half + 1e-15
    if sel.sum() < 4:
        raise ValidationError("central part of the cut has fewer than 4 points")
    curv, resid = {}, {}
    for name, f in freqs.items():
        c, _, res = parabola_curvature(eps[sel], f[sel])
        spread = max(np.ptp(f[sel]), 1e-300)
        if res / spread > residual_tol and np.ptp(f[sel]) > 1e-9 * np.abs(f).max():
            raise NumericalError(f"parabola residual {res / spread:.2e} too large for {name}")
        curv[name], resid[name] = c, res
    return CurvatureResult(curv, "quantum", resid)


# ---------------------------------------------------------------- matched filter

def matched_filter_score(s_on, s_off, r_on, r_off, T_bin: float, t=None) -> float:
    """Signal-to-noise score of a differential trace against a reference envelope.

    ``S = T_bin^(-1/2) int Re(ds dr^*) dt / sqrt(int |dr|^2 dt)``, trapezoidal
    integration on the shared grid ``t`` (unit spacing when omitted).
    """
    arrays = [np.asarray(x, dtype=complex) for x in (s_on, s_off, r_on, r_off)]
    n = arrays[0].shape
    if any(a.shape != n for a in arrays) or arrays[0].ndim != 1:
        raise ValidationError("all traces must share one 1-D time grid")
    if T_bin <= 0:
        raise ValidationError("T_bin must be positive")
    t = np.arange(n[0], dtype=float) if t is None else np.asarray(t, dtype=float)
    ds = arrays[0] - arrays[1]
    dr = arrays[2] - arrays[3]
    norm = trapezoid(np.abs(dr) ** 2, t)
    if norm <= 0:
        raise ValidationError("reference difference is zero")
    return float(trapezoid(np.real(ds * np.conj(dr)), t) / np.sqrt(norm) / np.sqrt(T_bin))
