"""Rotating-frame effective model for the four-to-one photon exchange."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from math import factorial

import numpy as np

from .circuit import SquidParams
from .errors import LabelingError, ValidationError
from .fock import FockSpace, OperatorMatrix, normal_order_polys

MEMORY, BUFFER = "a", "b"


@dataclass(frozen=True)
class PumpSpec:
    """Pump with half-amplitude ``xi`` (peak |eps| = 2 xi) and detuning ``Delta`` (rad/s)."""

    xi: float
    Delta: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.xi) or not np.isfinite(self.Delta):
            raise ValidationError("pump parameters must be finite")
        if abs(self.xi) > 0.1:
            warnings.warn("pump amplitude beyond the linearized regime |xi| <= 0.1", stacklevel=2)


@dataclass(frozen=True)
class DriveSpec:
    """Linear buffer drive: displacement rate ``xi_b`` and detuning ``delta`` (rad/s)."""

    xi_b: complex = 0.0
    delta: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.xi_b) and np.isfinite(self.delta)):
            raise ValidationError("drive parameters must be finite")


@dataclass
class DispersiveTable:
    """Dispersive shifts ``chi[(n, m)]`` (rad/s) and labeling overlaps of the dressed states."""

    chi: dict = field(default_factory=dict)
    overlaps: dict = field(default_factory=dict)
    energies: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.chi[key]

    @property
    def n_max(self) -> int:
        return max(n for n, _ in self.chi)

    @property
    def m_max(self) -> int:
        return max(m for _, m in self.chi)

    def covers(self, n_dim: int, m_dim: int) -> bool:
        return all((n, m) in self.chi for n in range(n_dim) for m in range(m_dim))

    @classmethod
    def zeros(cls, n_dim: int, m_dim: int) -> "DispersiveTable":
        keys = [(n, m) for n in range(n_dim) for m in range(m_dim)]
        return cls({k: 0.0 for k in keys}, {k: 1.0 for k in keys}, {})

    @classmethod
    def from_function(cls, n_dim: int, m_dim: int, f) -> "DispersiveTable":
        keys = [(n, m) for n in range(n_dim) for m in range(m_dim)]
        return cls({k: float(f(*k)) for k in keys}, {k: 1.0 for k in keys}, {})


def g4_rate(squid: SquidParams, phi_a: float, phi_b: float, pump: PumpSpec,
            leading_order: bool = False) -> float:
    """Four-to-one exchange rate (rad/s).

    ``g4 = E_sigma xi phi_a^4 phi_b exp(-(phi_a^2 + phi_b^2)/2) / 4!``. With
    ``leading_order=True`` the exponential factor is dropped.
    """
    g = squid.E_sigma / factorial(4) * pump.xi * phi_a**4 * phi_b
    if not leading_order:
        g *= np.exp(-(phi_a**2 + phi_b**2) / 2)
    return float(g)


def _target_states(space: FockSpace, n_dim: int, m_dim: int):
    ia, ib = space.mode_index(MEMORY), space.mode_index(BUFFER)
    for n in range(n_dim):
        for m in range(m_dim):
            occ = [0] * space.n_modes
            occ[ia], occ[ib] = n, m
            yield (n, m), space.index(occ)


def label_eigenstates(H_static: OperatorMatrix, n_dim: int = 8, m_dim: int = 3,
                      threshold: float = 0.9) -> DispersiveTable:
    """Match dressed eigenstates to Fock states |n, m> (other modes in vacuum).

    Each Fock state claims the eigenstate with the largest squared overlap. Two
    Fock states claiming the same eigenstate, or an overlap below ``threshold``,
    raise :class:`LabelingError`.
    """
    space = H_static.space
    if MEMORY not in space.mode_labels or BUFFER not in space.mode_labels:
        raise ValidationError("Hamiltonian must contain modes labelled 'a' and 'b'")
    if n_dim > space.mode_dims[space.mode_index(MEMORY)] or m_dim > space.mode_dims[space.mode_index(BUFFER)]:
        raise ValidationError("requested labels exceed the truncation")
    w, v = np.linalg.eigh(H_static.data)
    prob = np.abs(v) ** 2
    table = DispersiveTable()
    claimed = {}
    for key, idx in _target_states(space, n_dim, m_dim):
        j = int(np.argmax(prob[idx]))
        if j in claimed:
            raise LabelingError(f"states {claimed[j]} and {key} both map to eigenstate {j}")
        claimed[j] = key
        table.overlaps[key] = float(prob[idx, j])
        table.energies[key] = float(w[j])
    low = {k: o for k, o in table.overlaps.items() if o < threshold}
    if low:
        k = min(low, key=low.get)
        raise LabelingError(f"overlap {low[k]:.4f} of state {k} below threshold {threshold}")
    return table


def dispersive_table(H_static: OperatorMatrix, n_dim: int = 8, m_dim: int = 3,
                     threshold: float = 0.9) -> DispersiveTable:
    """chi_nm = E_nm - n E_40 / 4 - m E_01, energies measured from E_00."""
    if n_dim < 5 or m_dim < 2:
        raise ValidationError("the offset convention needs n_dim >= 5 and m_dim >= 2")
    table = label_eigenstates(H_static, n_dim, m_dim, threshold)
    e = table.energies
    e00 = e[(0, 0)]
    e40, e01 = e[(4, 0)] - e00, e[(0, 1)] - e00
    for (n, m), en in e.items():
        table.chi[(n, m)] = (en - e00) - n * e40 / 4 - m * e01
    for key in ((0, 0), (4, 0), (0, 1)):
        table.chi[key] = 0.0
    return table


def rwa_space(n_dim: int = 8, m_dim: int = 3) -> FockSpace:
    return FockSpace((n_dim, m_dim), (MEMORY, BUFFER))


def build_rwa_hamiltonian(chi: DispersiveTable, g4: float, pump: PumpSpec, drive: DriveSpec,
                          n_dim: int = 8, m_dim: int = 3) -> OperatorMatrix:
    """Static Hamiltonian in the frame rotating with pump and drive (rad/s).

    ``-((Delta + delta)/4) n_a - delta n_b + sum chi_nm |nm><nm| + g4 (a^dag^4 b + a^4 b^dag)
    + xi_b b + xi_b^* b^dag``.
    """
    if not chi.covers(n_dim, m_dim):
        raise ValidationError(f"dispersive table does not cover a {n_dim}x{m_dim} space")
    space = rwa_space(n_dim, m_dim)
    na = np.arange(n_dim)
    a = np.diag(np.sqrt(na[1:].astype(float)), 1)
    b = np.diag(np.sqrt(np.arange(1, m_dim, dtype=float)), 1)
    Ia, Ib = np.eye(n_dim), np.eye(m_dim)
    A, B = np.kron(a, Ib), np.kron(Ia, b)
    diag = np.zeros(space.dim)
    for n in range(n_dim):
        for m in range(m_dim):
            i = space.index((n, m))
            diag[i] = -(pump.Delta + drive.delta) / 4 * n - drive.delta * m + chi[(n, m)]
    h = np.diag(diag).astype(complex)
    A4 = np.linalg.matrix_power(A, 4)
    ex = g4 * (A4 @ B.conj().T)
    h += ex + ex.conj().T
    h += drive.xi_b * B + np.conj(drive.xi_b) * B.conj().T
    h = 0.5 * (h + h.conj().T)
    return OperatorMatrix(space, h, unit="angular-frequency", hermitian=True)


def state_dependent_exchange(n: int, m: int, g4: float, phi_a: float, phi_b: float) -> float:
    """<n, m+1| g4 :P_a(a^dag a) P_b(b^dag b) a^4 b^dag: |n+4, m>."""
    if n < 0 or m < 0:
        raise ValidationError("n and m must be non-negative")
    pa, pb = normal_order_polys(phi_a, phi_b, max(n, m))
    sa = 0.0
    for k in range(n + 1):
        # a^(k+4) |n+4> -> sqrt((n+4)!/(n-k)!) |n-k>, then a^dag^k -> sqrt(n!/(n-k)!)
        sa += pa[k] * np.sqrt(factorial(n + 4) / factorial(n - k) * factorial(n) / factorial(n - k))
    sb = 0.0
    for k in range(m + 1):
        sb += pb[k] * np.sqrt(factorial(m) / factorial(m - k) * factorial(m + 1) / factorial(m - k))
    return float(g4 * sa * sb)
