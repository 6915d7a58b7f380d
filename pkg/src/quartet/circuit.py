"""Static circuit Hamiltonian of the three-mode ATS device and closed-form non-ideality estimates.

Energies are stored as angular frequencies (energy / hbar, rad/s).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import constants

from .errors import NumericalError, ValidationError
from .fock import (FockSpace, OperatorMatrix, phase_operator, trig_of_phase,
                   number_operator)

TWO_PI = 2 * np.pi
PHI0_REDUCED = constants.hbar / (2 * constants.e)
DEFAULT_MAX_DIM = 20000


def inductive_energy(inductance: float) -> float:
    """Inductive energy phi0^2/L of an inductance (henry), as angular frequency."""
    if inductance <= 0:
        raise ValidationError("inductance must be positive")
    return PHI0_REDUCED**2 / inductance / constants.hbar


@dataclass(frozen=True)
class ModeSpec:
    label: str
    omega: float
    phi_zpf: float
    dim: int = 8

    def __post_init__(self):
        if not np.isfinite(self.omega) or self.omega <= 0:
            raise ValidationError(f"mode {self.label}: omega must be positive")
        if not 0 <= self.phi_zpf < 1.5:
            raise ValidationError(f"mode {self.label}: phi_zpf must lie in [0, 1.5)")
        if int(self.dim) < 2:
            raise ValidationError(f"mode {self.label}: truncation must be >= 2")

    @property
    def E_L(self) -> float:
        """Inductive energy of the mode, from omega = 2 E_L phi_zpf^2 (harmonic relation)."""
        if self.phi_zpf == 0:
            return np.inf
        return self.omega / (2 * self.phi_zpf**2)


@dataclass(frozen=True)
class SquidParams:
    """Two-junction SQUID with identical series inductances in its arms.

    ``E_sigma = E_J1 + E_J2`` and ``E_delta = E_J1 - E_J2``. The second-harmonic
    energy ``e_sigma`` is derived from the junction energies and ``eps_L``.
    """

    E_sigma: float
    E_delta: float = 0.0
    eps_L: float = np.inf

    def __post_init__(self):
        if not self.E_sigma > 0:
            raise ValidationError("E_sigma must be positive")
        if abs(self.E_delta) > self.E_sigma:
            raise ValidationError("|E_delta| cannot exceed E_sigma")
        if not self.eps_L > 0:
            raise ValidationError("eps_L must be positive")

    @property
    def E_J1(self) -> float:
        return 0.5 * (self.E_sigma + self.E_delta)

    @property
    def E_J2(self) -> float:
        return 0.5 * (self.E_sigma - self.E_delta)

    @property
    def e_sigma(self) -> float:
        if np.isinf(self.eps_L):
            return 0.0
        return (self.E_J1**2 + self.E_J2**2) / (4 * self.eps_L)

    def with_e_sigma(self, e_sigma: float) -> "SquidParams":
        """Copy whose series inductance is chosen to give the requested ``e_sigma``."""
        if e_sigma < 0:
            raise ValidationError("e_sigma must be non-negative")
        if e_sigma == 0:
            return replace(self, eps_L=np.inf)
        return replace(self, eps_L=(self.E_J1**2 + self.E_J2**2) / (4 * e_sigma))


@dataclass(frozen=True)
class ChainSpec:
    """Junction-chain superinductor.

    ``participation[k][i]`` is the zero-point phase of mode ``i`` across chain ``k``.
    When empty, a single chain carrying the SQUID phase is assumed.
    """

    E_L: float
    N: int = 25
    participation: tuple[tuple[float, ...], ...] = ()

    def __post_init__(self):
        if not self.E_L > 0:
            raise ValidationError("chain E_L must be positive")
        if int(self.N) < 1:
            raise ValidationError("chain junction count must be >= 1")
        object.__setattr__(self, "participation",
                           tuple(tuple(float(p) for p in row) for row in self.participation))


@dataclass(frozen=True)
class FluxBias:
    phi_sigma: float
    phi_delta: float

    def __post_init__(self):
        if not (np.isfinite(self.phi_sigma) and np.isfinite(self.phi_delta)):
            raise ValidationError("flux bias must be finite")

    @classmethod
    def saddle(cls, name: str, eps_sigma: float = 0.0, eps_delta: float = 0.0) -> "FluxBias":
        """Bias near SP1 = (-pi/2, +pi/2) or SP2 = (-pi/2, -pi/2)."""
        centers = {"SP1": (-np.pi / 2, np.pi / 2), "SP2": (-np.pi / 2, -np.pi / 2)}
        if name not in centers:
            raise ValidationError(f"unknown saddle {name!r}")
        s, d = centers[name]
        return cls(s + eps_sigma, d + eps_delta)


def _cos(x: float) -> float:
    # exact zeros at odd multiples of pi/2 keep the saddle points Kerr-free
    c = float(np.cos(x))
    return 0.0 if abs(c) < 1e-15 else c


def _sin(x: float) -> float:
    s = float(np.sin(x))
    return 0.0 if abs(s) < 1e-15 else s


def squid_potential_coeffs(bias: FluxBias, squid: SquidParams, delta_sign: int = 1):
    """Coefficients of cos(phi - phi_D), sin(phi - phi_D) and cos(2 phi - 2 phi_D).

    ``delta_sign`` multiplies the imbalance term, whose overall sign depends on
    the convention chosen for E_delta.
    """
    if delta_sign not in (1, -1):
        raise ValidationError("delta_sign must be +1 or -1")
    cos_c = -squid.E_sigma * _cos(bias.phi_sigma)
    sin_c = -delta_sign * squid.E_delta * _sin(bias.phi_sigma)
    cos2_c = squid.e_sigma * _cos(2 * bias.phi_sigma)
    return cos_c, sin_c, cos2_c


def stray_renormalization(E_J: float, eps_L: float) -> float:
    """Second-harmonic energy E_J^2/(4 eps_L) induced by a series inductance."""
    if E_J <= 0 or eps_L <= 0:
        raise ValidationError("E_J and eps_L must be positive")
    if np.isinf(eps_L):
        return 0.0
    if eps_L / E_J < 10:
        warnings.warn("eps_L is not much larger than E_J; the expansion is unreliable",
                      stacklevel=2)
    return E_J**2 / (4 * eps_L)


class CircuitOperators:
    """Phase-dependent operators of a mode set, computed once and reused across biases."""

    def __init__(self, modes: Sequence[ModeSpec], trig_method: str = "eig",
                 max_dim: int = DEFAULT_MAX_DIM):
        self.modes = tuple(modes)
        if len(self.modes) == 0:
            raise ValidationError("at least one mode is required")
        dims = tuple(int(m.dim) for m in self.modes)
        if int(np.prod(dims)) > max_dim:
            raise ValidationError(f"total dimension {int(np.prod(dims))} exceeds cap {max_dim}")
        self.space = FockSpace(dims, tuple(m.label for m in self.modes))
        self.phi = phase_operator(self.space, [m.phi_zpf for m in self.modes])
        self.trig_method = trig_method
        self._cache: dict = {}

    def trig(self, kind: str, k: int) -> np.ndarray:
        key = (kind, k)
        if key not in self._cache:
            self._cache[key] = trig_of_phase(self.phi, kind, k, method=self.trig_method).data
        return self._cache[key]

    def harmonic(self) -> np.ndarray:
        if "harm" not in self._cache:
            h = np.zeros((self.space.dim, self.space.dim), dtype=complex)
            for i, m in enumerate(self.modes):
                h += m.omega * number_operator(self.space, i).data
            self._cache["harm"] = h
        return self._cache["harm"]

    def chain_term(self, participation: Sequence[Sequence[float]]) -> np.ndarray:
        """sum over chains of cos(psi_k) + psi_k^2 / 2, psi_k the phase across chain k."""
        rows = tuple(tuple(float(p) for p in r) for r in participation)
        key = ("chain", rows)
        if key not in self._cache:
            out = np.zeros((self.space.dim, self.space.dim), dtype=complex)
            for r in rows:
                if len(r) != len(self.modes):
                    raise ValidationError("chain participation row length does not match modes")
                psi = phase_operator(self.space, r)
                out += trig_of_phase(psi, "cos", 1, method=self.trig_method).data
                out += 0.5 * psi.data @ psi.data
            self._cache[key] = out
        return self._cache[key]

    def phi_squared(self) -> np.ndarray:
        if "phi2" not in self._cache:
            self._cache["phi2"] = self.phi.data @ self.phi.data
        return self._cache["phi2"]


def build_static_hamiltonian(modes: Sequence[ModeSpec], squid: SquidParams, chains: ChainSpec | None,
                             bias: FluxBias, *, delta_sign: int = 1, trig_method: str = "eig",
                             max_dim: int = DEFAULT_MAX_DIM,
                             operators: CircuitOperators | None = None) -> OperatorMatrix:
    """Static Hamiltonian of the circuit (rad/s).

    ``sum_i w_i n_i - E_S cos(p_S) cos(phi - p_D) - E_D sin(p_S) sin(phi - p_D)
    + e_S cos(2 p_S) cos(2 phi - 2 p_D) + (E_L/N^2) (cos(phi) + phi^2/2)``.

    Passing a prebuilt ``operators`` object skips the trigonometric matrix
    functions, which dominate the cost in bias sweeps.
    """
    ops = operators if operators is not None else CircuitOperators(modes, trig_method, max_dim)
    if tuple(modes) != ops.modes:
        raise ValidationError("operators were built for a different mode list")
    cos_c, sin_c, cos2_c = squid_potential_coeffs(bias, squid, delta_sign)
    cd, sd = _cos(bias.phi_delta), _sin(bias.phi_delta)
    c2d, s2d = _cos(2 * bias.phi_delta), _sin(2 * bias.phi_delta)
    h = ops.harmonic().copy()
    # cos(phi - d) = cos phi cos d + sin phi sin d ; sin(phi - d) = sin phi cos d - cos phi sin d
    a_cos = cos_c * cd - sin_c * sd
    a_sin = cos_c * sd + sin_c * cd
    if a_cos:
        h += a_cos * ops.trig("cos", 1)
    if a_sin:
        h += a_sin * ops.trig("sin", 1)
    if cos2_c:
        h += cos2_c * c2d * ops.trig("cos", 2) + cos2_c * s2d * ops.trig("sin", 2)
    if chains is not None:
        pref = chains.E_L / chains.N**2
        if chains.participation:
            h += pref * ops.chain_term(chains.participation)
        else:
            h += pref * (ops.trig("cos", 1) + 0.5 * ops.phi_squared())
    h = 0.5 * (h + h.conj().T)
    if not np.all(np.isfinite(h)):
        raise NumericalError("non-finite Hamiltonian entries")
    return OperatorMatrix(ops.space, h, unit="angular-frequency", hermitian=True)


def default_chain_participation(modes: Sequence[ModeSpec]) -> tuple[tuple[float, ...], ...]:
    return (tuple(m.phi_zpf for m in modes),)


def kerr_estimates(modes: Sequence[ModeSpec], squid: SquidParams, chains: ChainSpec | None) -> dict:
    """Leading-order self- and cross-Kerr amplitudes (rad/s).

    Returns a dict with the junction-asymmetry terms ``self`` (per mode label)
    and ``cross`` (per label pair), the superinductor terms ``chain_self`` and
    ``chain_cross``, and their sums ``total_self`` and ``total_cross``.
    """
    labels = [m.label for m in modes]
    phis = np.array([m.phi_zpf for m in modes])
    ed = squid.E_delta
    selfk = {lab: 0.5 * ed * p**4 for lab, p in zip(labels, phis)}
    cross = {}
    for i in range(len(modes)):
        for j in range(i + 1, len(modes)):
            cross[(labels[i], labels[j])] = ed * phis[i]**2 * phis[j]**2
    chain_self = {lab: 0.0 for lab in labels}
    chain_cross = {key: 0.0 for key in cross}
    if chains is not None:
        table = chains.participation or default_chain_participation(modes)
        for row in table:
            if len(row) != len(modes):
                raise ValidationError("chain participation row length does not match modes")
            pref = chains.E_L / chains.N**2
            for i, lab in enumerate(labels):
                chain_self[lab] += 0.5 * pref * row[i]**4
            for i in range(len(modes)):
                for j in range(i + 1, len(modes)):
                    chain_cross[(labels[i], labels[j])] += pref * row[i]**2 * row[j]**2
    total_self = {lab: selfk[lab] + chain_self[lab] for lab in labels}
    total_cross = {key: cross[key] + chain_cross[key] for key in cross}
    return {"self": selfk, "cross": cross, "chain_self": chain_self, "chain_cross": chain_cross,
            "total_self": total_self, "total_cross": total_cross}


def pump_asymmetry_effect(xi_c: complex, xi_d: complex, squid: SquidParams,
                          xi_max: float = 0.3) -> tuple[float, float]:
    """Static cos(phi) amplitude from two off-resonant pumps, and the cancelling amplitude.

    Returns ``(2 Re(xi_c xi_d^*) E_sigma, sqrt(E_delta / (2 E_sigma)))``. The second
    value is the real, equal pump amplitude that cancels the imbalance term.
    """
    for x in (xi_c, xi_d):
        if abs(x) > 0.3:
            warnings.warn("pump amplitude beyond the second-order expansion range", stacklevel=2)
    eff = 2 * np.real(xi_c * np.conj(xi_d)) * squid.E_sigma
    if squid.E_delta < 0:
        raise NumericalError("cancellation with equal real pumps needs E_delta >= 0")
    xi = np.sqrt(squid.E_delta / (2 * squid.E_sigma))
    if xi > xi_max:
        raise NumericalError(f"cancellation needs xi = {xi:.3g} above the cap {xi_max}")
    return float(eff), float(xi)


@dataclass(frozen=True)
class CircuitParams:
    """Complete circuit description used by the higher-level modules."""

    modes: tuple[ModeSpec, ...]
    squid: SquidParams
    chains: ChainSpec | None = None
    delta_sign: int = 1
    extras: dict = field(default_factory=dict, compare=False)

    def mode(self, label: str) -> ModeSpec:
        for m in self.modes:
            if m.label == label:
                return m
        raise ValidationError(f"no mode labelled {label!r}")

    def subset(self, labels: Sequence[str]) -> "CircuitParams":
        return replace(self, modes=tuple(self.mode(lab) for lab in labels))

    def with_dims(self, dims: dict) -> "CircuitParams":
        return replace(self, modes=tuple(replace(m, dim=dims.get(m.label, m.dim)) for m in self.modes))

    def bumped(self, extra: int) -> "CircuitParams":
        return replace(self, modes=tuple(replace(m, dim=m.dim + extra) for m in self.modes))

    def scaled_zpf(self, factor: float) -> "CircuitParams":
        """Same mode frequencies with every zero-point phase multiplied by ``factor``."""
        chains = self.chains
        if chains is not None and chains.participation:
            chains = replace(chains, participation=tuple(tuple(factor * p for p in row)
                                                         for row in chains.participation))
        return replace(self, modes=tuple(replace(m, phi_zpf=factor * m.phi_zpf) for m in self.modes),
                       chains=chains)

    def hamiltonian(self, bias: FluxBias, operators: CircuitOperators | None = None,
                    **kw) -> OperatorMatrix:
        return build_static_hamiltonian(self.modes, self.squid, self.chains, bias,
                                        delta_sign=self.delta_sign, operators=operators, **kw)

    def operators(self, **kw) -> CircuitOperators:
        return CircuitOperators(self.modes, **kw)


def reference_params(dims: dict | None = None, readout: bool = True) -> CircuitParams:
    """Fitted device parameters (memory a, buffer b, readout r)."""
    dims = {"a": 16, "b": 8, "r": 3, **(dims or {})}
    modes = [ModeSpec("a", TWO_PI * 4.13e9, 0.405, dims["a"]),
             ModeSpec("b", TWO_PI * 6.94e9, 0.312, dims["b"])]
    if readout:
        modes.append(ModeSpec("r", TWO_PI * 7.45e9, 0.044, dims["r"]))
    squid = SquidParams(E_sigma=TWO_PI * 2 * 17.7e9, E_delta=TWO_PI * 0.35e6,
                        eps_L=TWO_PI * 1920e9)
    chain = ChainSpec(E_L=inductive_energy(28.5e-9), N=25)
    return CircuitParams(tuple(modes), squid, chain)
