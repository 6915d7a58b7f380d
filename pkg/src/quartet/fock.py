"""Operator algebra on truncated multimode Fock spaces.

Operators are dense complex matrices. Mode ordering follows ``np.kron``
ordering: the first mode is the most significant index.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial
from typing import Sequence

import numpy as np
from scipy.special import gammaln

from .errors import NumericalError, ValidationError

UNITS = ("dimensionless", "angular-frequency")
HERMITIAN_TOL = 1e-12


@dataclass(frozen=True)
class FockSpace:
    """Tensor product of truncated single-mode Fock spaces."""

    mode_dims: tuple[int, ...]
    mode_labels: tuple[str, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.mode_dims)
        labels = tuple(str(lab) for lab in self.mode_labels)
        object.__setattr__(self, "mode_dims", dims)
        object.__setattr__(self, "mode_labels", labels)
        if len(dims) == 0:
            raise ValidationError("a Fock space needs at least one mode")
        if len(dims) != len(labels):
            raise ValidationError("mode_dims and mode_labels differ in length")
        if any(d < 2 for d in dims):
            raise ValidationError(f"every truncation must be >= 2, got {dims}")
        if len(set(labels)) != len(labels):
            raise ValidationError(f"mode labels must be unique, got {labels}")

    @property
    def dim(self) -> int:
        return int(np.prod(self.mode_dims))

    @property
    def n_modes(self) -> int:
        return len(self.mode_dims)

    def mode_index(self, mode) -> int:
        if isinstance(mode, str):
            try:
                return self.mode_labels.index(mode)
            except ValueError:
                raise ValidationError(f"unknown mode label {mode!r}") from None
        idx = int(mode)
        if not 0 <= idx < self.n_modes:
            raise ValidationError(f"mode index {mode} out of range for {self.n_modes} modes")
        return idx

    def index(self, occupations: Sequence[int]) -> int:
        """Flat basis index of the Fock product state with given occupations."""
        occ = tuple(int(n) for n in occupations)
        if len(occ) != self.n_modes:
            raise ValidationError("occupation tuple has the wrong length")
        for n, d in zip(occ, self.mode_dims):
            if not 0 <= n < d:
                raise ValidationError(f"occupation {occ} outside truncation {self.mode_dims}")
        return int(np.ravel_multi_index(occ, self.mode_dims))

    def occupations(self, index: int) -> tuple[int, ...]:
        return tuple(int(n) for n in np.unravel_index(index, self.mode_dims))

    def occupation_table(self) -> np.ndarray:
        """Array of shape (dim, n_modes) with the occupations of every basis state."""
        grids = np.indices(self.mode_dims).reshape(self.n_modes, -1)
        return grids.T.copy()

    def basis_state(self, occupations: Sequence[int]) -> np.ndarray:
        psi = np.zeros(self.dim, dtype=complex)
        psi[self.index(occupations)] = 1.0
        return psi

    def bumped(self, extra: int) -> "FockSpace":
        """Same modes with ``extra`` more levels each (convergence checks)."""
        return FockSpace(tuple(d + extra for d in self.mode_dims), self.mode_labels)

    def inner_mask(self, fraction: float = 0.6) -> np.ndarray:
        """Boolean mask of basis states lying in the inner ``fraction`` of every mode."""
        cut = [max(1, int(fraction * d)) for d in self.mode_dims]
        occ = self.occupation_table()
        return np.all(occ < np.array(cut), axis=1)


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """Dense matrix acting on a :class:`FockSpace`."""

    space: FockSpace
    data: np.ndarray
    unit: str = "dimensionless"
    hermitian: bool = False

    def __post_init__(self):
        data = np.asarray(self.data, dtype=complex)
        object.__setattr__(self, "data", data)
        n = self.space.dim
        if data.shape != (n, n):
            raise ValidationError(f"operator shape {data.shape} does not match space dimension {n}")
        if self.unit not in UNITS:
            raise ValidationError(f"unknown unit {self.unit!r}")
        if self.hermitian:
            scale = max(1.0, float(np.max(np.abs(data)))) if data.size else 1.0
            dev = float(np.max(np.abs(data - data.conj().T))) if data.size else 0.0
            if dev > HERMITIAN_TOL * scale:
                raise ValidationError(f"operator flagged Hermitian deviates by {dev:.3e}")

    def dag(self) -> "OperatorMatrix":
        return OperatorMatrix(self.space, self.data.conj().T, self.unit, self.hermitian)

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.data - self.data.conj().T)))

    def expect(self, state: np.ndarray) -> complex:
        """Expectation value in a ket (1-D) or density matrix (2-D)."""
        state = np.asarray(state)
        if state.ndim == 1:
            return complex(np.vdot(state, self.data @ state))
        return complex(np.trace(self.data @ state))

    def element(self, bra: Sequence[int], ket: Sequence[int]) -> complex:
        return complex(self.data[self.space.index(bra), self.space.index(ket)])

    def _check(self, other: "OperatorMatrix"):
        if other.space != self.space:
            raise ValidationError("operators live on different spaces")
        if other.unit != self.unit:
            raise ValidationError(f"unit mismatch: {self.unit} vs {other.unit}")

    def __add__(self, other):
        self._check(other)
        return OperatorMatrix(self.space, self.data + other.data, self.unit,
                              self.hermitian and other.hermitian)

    def __sub__(self, other):
        self._check(other)
        return OperatorMatrix(self.space, self.data - other.data, self.unit,
                              self.hermitian and other.hermitian)

    def __neg__(self):
        return OperatorMatrix(self.space, -self.data, self.unit, self.hermitian)

    def __matmul__(self, other):
        if other.space != self.space:
            raise ValidationError("operators live on different spaces")
        unit = self.unit if other.unit == "dimensionless" else other.unit
        return OperatorMatrix(self.space, self.data @ other.data, unit)

    def scaled(self, factor: complex, unit: str | None = None) -> "OperatorMatrix":
        herm = self.hermitian and np.isreal(factor)
        return OperatorMatrix(self.space, factor * self.data, unit or self.unit, bool(herm))


@dataclass(frozen=True, eq=False)
class PhaseOperator(OperatorMatrix):
    """Hermitian phase operator ``sum_i c_i (a_i + a_i^dag)`` with its coefficients kept."""

    coefficients: tuple[float, ...] = field(default=())


def _lowering(d: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, d, dtype=float)), 1)


def _embed(space: FockSpace, mode: int, single: np.ndarray) -> np.ndarray:
    out = np.array([[1.0 + 0j]])
    for i, d in enumerate(space.mode_dims):
        out = np.kron(out, single if i == mode else np.eye(d))
    return out


def ladder_ops(space: FockSpace, mode) -> tuple[OperatorMatrix, OperatorMatrix]:
    """Lowering and raising operators of one mode embedded in ``space``."""
    idx = space.mode_index(mode)
    low = _embed(space, idx, _lowering(space.mode_dims[idx]))
    return OperatorMatrix(space, low), OperatorMatrix(space, low.conj().T)


def number_operator(space: FockSpace, mode) -> OperatorMatrix:
    idx = space.mode_index(mode)
    n = np.diag(np.arange(space.mode_dims[idx], dtype=float))
    return OperatorMatrix(space, _embed(space, idx, n), hermitian=True)


def identity(space: FockSpace, unit: str = "dimensionless") -> OperatorMatrix:
    return OperatorMatrix(space, np.eye(space.dim), unit, hermitian=True)


def phase_operator(space: FockSpace, coefficients: Sequence[float]) -> PhaseOperator:
    """Reduced phase ``sum_i phi_i (a_i + a_i^dag)`` for per-mode zero-point amplitudes."""
    coeffs = tuple(float(c) for c in coefficients)
    if len(coeffs) != space.n_modes:
        raise ValidationError(f"expected {space.n_modes} coefficients, got {len(coeffs)}")
    if any(c < 0 for c in coeffs):
        raise ValidationError("phase coefficients must be non-negative")
    data = np.zeros((space.dim, space.dim), dtype=complex)
    for i, c in enumerate(coeffs):
        if c:
            x = _lowering(space.mode_dims[i])
            data += c * _embed(space, i, x + x.T)
    return PhaseOperator(space, data, hermitian=True, coefficients=coeffs)


def _displacement_normal_ordered(d: int, kappa: float, max_order: int) -> tuple[np.ndarray, float]:
    """Matrix of exp(i kappa (a + a^dag)) from its normal-ordered series.

    Terms a^dag^n a^m with n, m <= max_order are kept. Returns the matrix and the
    largest magnitude among the discarded terms' coefficients.
    """
    out = np.zeros((d, d), dtype=complex)
    if kappa == 0.0:
        return np.eye(d, dtype=complex), 0.0
    logk = np.log(abs(kappa))
    lf = gammaln(np.arange(d) + 1.0)
    pref = np.exp(-kappa**2 / 2)
    dropped = 0.0
    for p in range(d):
        for q in range(d):
            acc = 0j
            for j in range(min(p, q) + 1):
                n, m = p - j, q - j
                # <p| a^dag^n a^m |q> = sqrt(p! q!) / j!
                logmag = (n + m) * logk + 0.5 * (lf[p] + lf[q]) - lf[j] - lf[n] - lf[m]
                term = (1j * np.sign(kappa)) ** (n + m) * np.exp(logmag)
                if n > max_order or m > max_order:
                    dropped = max(dropped, abs(term) * pref)
                    continue
                acc += term
            out[p, q] = pref * acc
    return out, dropped


def trig_of_phase(phi: OperatorMatrix, kind: str, scale: float = 1.0, method: str = "eig",
                  max_order: int | None = None, tol: float = 1e-10) -> OperatorMatrix:
    """``sin(scale * phi)`` or ``cos(scale * phi)``.

    ``method="eig"`` diagonalizes the truncated phase matrix. ``method="bch"``
    sums the normal-ordered displacement series mode by mode; it needs a
    :class:`PhaseOperator` and returns the exact infinite-space matrix elements
    restricted to the truncation when ``max_order`` covers every level.
    """
    if kind not in ("sin", "cos"):
        raise ValidationError(f"kind must be 'sin' or 'cos', got {kind!r}")
    if not phi.hermitian and phi.hermiticity_error() > HERMITIAN_TOL * max(1.0, np.abs(phi.data).max()):
        raise ValidationError("phase operator must be Hermitian")
    space = phi.space
    if method == "eig":
        w, v = np.linalg.eigh(phi.data)
        f = np.cos(scale * w) if kind == "cos" else np.sin(scale * w)
        data = (v * f) @ v.conj().T
    elif method == "bch":
        if not isinstance(phi, PhaseOperator):
            raise ValidationError("the BCH path needs a PhaseOperator built by phase_operator()")
        plus = np.array([[1.0 + 0j]])
        minus = np.array([[1.0 + 0j]])
        for d, c in zip(space.mode_dims, phi.coefficients):
            order = d - 1 if max_order is None else int(max_order)
            ep, dropped_p = _displacement_normal_ordered(d, scale * c, order)
            em, dropped_m = _displacement_normal_ordered(d, -scale * c, order)
            if max(dropped_p, dropped_m) > tol:
                raise NumericalError(
                    f"normal-ordered series not converged within {order} orders "
                    f"(largest dropped term {max(dropped_p, dropped_m):.2e})")
            plus = np.kron(plus, ep)
            minus = np.kron(minus, em)
        data = (plus + minus) / 2 if kind == "cos" else (plus - minus) / 2j
    else:
        raise ValidationError(f"unknown method {method!r}")
    data = (data + data.conj().T) / 2
    return OperatorMatrix(space, data, hermitian=True)


def normal_order_polys(phi_a: float, phi_b: float, max_order: int) -> tuple[np.ndarray, np.ndarray]:
    """Coefficients of the state-dependent corrections to the 4-to-1 exchange.

    ``P_a(X) = 4! sum_n (-1)^n phi_a^(2n) X^n / (n! (n+4)!)`` and
    ``P_b(X) = sum_n (-1)^n phi_b^(2n) X^n / (n! (n+1)!)``, entries n = 0..max_order.
    """
    if phi_a < 0 or phi_b < 0:
        raise ValidationError("zero-point amplitudes must be non-negative")
    if max_order < 0:
        raise ValidationError("max_order must be >= 0")
    n = np.arange(max_order + 1)
    fa = np.array([factorial(k) * factorial(k + 4) for k in n], dtype=float)
    fb = np.array([factorial(k) * factorial(k + 1) for k in n], dtype=float)
    pa = factorial(4) * (-1.0) ** n * phi_a ** (2 * n) / fa
    pb = (-1.0) ** n * phi_b ** (2 * n) / fb
    return pa, pb
