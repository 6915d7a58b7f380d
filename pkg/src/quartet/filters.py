"""Transfer-matrix model of periodically modulated transmission-line filters."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import NoStopbandError, ValidationError

MIN_CELLS_PER_WAVELENGTH = 40


@dataclass(frozen=True)
class LineProfile:
    """Line of ``n_periods`` impedance-modulation periods between two Z0 ports.

    The sinusoidal profile is ``Zc + Za sin(eta x + phase)`` with Zc, Za set by
    ``z_min``/``z_max``; the phase is chosen so that Z = Z0 at every period
    boundary when Z0 lies inside the range. ``table`` (impedance samples over
    one period, endpoint excluded) replaces the sinusoid when given.
    """

    period: float
    n_periods: int
    z_min: float
    z_max: float
    v: float
    Z0: float = 50.0
    cells_per_period: int = 64
    table: tuple | None = None

    def __post_init__(self):
        if self.period <= 0 or self.v <= 0 or self.Z0 <= 0:
            raise ValidationError("period, velocity and port impedance must be positive")
        if int(self.n_periods) < 0 or int(self.cells_per_period) < 1:
            raise ValidationError("invalid period or cell count")
        if not 0 < self.z_min <= self.z_max:
            raise ValidationError("impedance range must satisfy 0 < z_min <= z_max")
        if self.table is not None:
            t = np.asarray(self.table, dtype=float)
            if t.ndim != 1 or t.size < 2 or np.any(t <= 0):
                raise ValidationError("tabulated profile must hold positive impedances")
            object.__setattr__(self, "table", tuple(t))

    @classmethod
    def for_center(cls, center_hz: float, period: float, n_periods: int, z_min: float, z_max: float,
                   **kw) -> "LineProfile":
        """Velocity set so the first gap sits at ``center_hz`` (w_G = v eta / 2)."""
        v = 2 * center_hz * period
        return cls(period, n_periods, z_min, z_max, v, **kw)

    @classmethod
    def small_modulation(cls, epsilon: float, center_hz: float, period: float, n_periods: int,
                         Z0: float = 50.0, **kw) -> "LineProfile":
        """Z(x) = Z0 (1 + epsilon sin(eta x))."""
        if not 0 <= epsilon < 1:
            raise ValidationError("modulation depth must lie in [0, 1)")
        return cls.for_center(center_hz, period, n_periods, Z0 * (1 - epsilon), Z0 * (1 + epsilon),
                              Z0=Z0, **kw)

    @property
    def eta(self) -> float:
        return 2 * np.pi / self.period

    @property
    def gap_center(self) -> float:
        """v eta / 2 in rad/s."""
        return self.v * self.eta / 2

    @property
    def phase(self) -> float:
        zc, za = self._center_amp()
        if za == 0:
            return 0.0
        return float(np.arcsin(np.clip((self.Z0 - zc) / za, -1, 1)))

    def _center_amp(self):
        return 0.5 * (self.z_max + self.z_min), 0.5 * (self.z_max - self.z_min)

    def impedance(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.table is not None:
            t = np.asarray(self.table)
            u = np.mod(x, self.period) / self.period * t.size
            return np.interp(u, np.arange(t.size + 1), np.append(t, t[0]))
        zc, za = self._center_amp()
        return zc + za * np.sin(self.eta * x + self.phase)

    @property
    def n_cells(self) -> int:
        return int(self.n_periods) * int(self.cells_per_period)

    @property
    def cell_length(self) -> float:
        return self.period / self.cells_per_period

    def cell_impedances(self) -> np.ndarray:
        x = (np.arange(self.n_cells) + 0.5) * self.cell_length
        return self.impedance(x)

    def max_resolved_omega(self) -> float:
        return 2 * np.pi * self.v / (MIN_CELLS_PER_WAVELENGTH * self.cell_length)


@dataclass
class TwoPort:
    omega: np.ndarray
    abcd: np.ndarray
    s: np.ndarray
    Z0: float = 50.0

    @property
    def s21_db(self) -> np.ndarray:
        return 20 * np.log10(np.abs(self.s[:, 1, 0]))

    @property
    def s11_db(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 20 * np.log10(np.abs(self.s[:, 0, 0]))

    def unitarity_error(self) -> float:
        return float(np.max(np.abs(np.abs(self.s[:, 0, 0]) ** 2 + np.abs(self.s[:, 1, 0]) ** 2 - 1)))

    def max_s21_db(self, f_lo: float, f_hi: float) -> float:
        f = self.omega / (2 * np.pi)
        sel = (f >= f_lo) & (f <= f_hi)
        if not np.any(sel):
            raise ValidationError("band lies outside the sweep")
        return float(self.s21_db[sel].max())


def _check_resolution(v: float, length: float, omega) -> None:
    wmax = float(np.max(np.abs(omega)))
    if wmax > 0 and 2 * np.pi * v / wmax < MIN_CELLS_PER_WAVELENGTH * length:
        raise ValidationError(
            f"cell of {length:.3e} m is longer than 1/{MIN_CELLS_PER_WAVELENGTH} wavelength "
            f"at {wmax / 2 / np.pi:.3e} Hz")


def abcd_cell(Z: float, v: float, length: float, omega) -> np.ndarray:
    """ABCD matrix of a uniform lossless section; shape (..., 2, 2) over ``omega``."""
    _check_resolution(v, length, omega)
    bl = np.asarray(omega, dtype=float) / v * length
    c, s = np.cos(bl), np.sin(bl)
    out = np.empty(bl.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = c
    out[..., 0, 1] = 1j * Z * s
    out[..., 1, 0] = 1j * s / Z
    out[..., 1, 1] = c
    return out


def abcd_to_s(abcd: np.ndarray, Z0: float) -> np.ndarray:
    A, B, C, D = abcd[..., 0, 0], abcd[..., 0, 1], abcd[..., 1, 0], abcd[..., 1, 1]
    den = A + B / Z0 + C * Z0 + D
    s = np.empty_like(abcd)
    s[..., 0, 0] = (A + B / Z0 - C * Z0 - D) / den
    s[..., 0, 1] = 2 * (A * D - B * C) / den
    s[..., 1, 0] = 2 / den
    s[..., 1, 1] = (-A + B / Z0 - C * Z0 + D) / den
    return s


def cascade_and_sparams(profile: LineProfile, omega_sweep: Sequence[float]) -> TwoPort:
    """Product of cell ABCD matrices and the resulting S-parameters into Z0 ports."""
    w = np.asarray(omega_sweep, dtype=float)
    _check_resolution(profile.v, profile.cell_length, w)
    total = np.broadcast_to(np.eye(2, dtype=complex), w.shape + (2, 2)).copy()
    for z in profile.cell_impedances():
        total = total @ abcd_cell(z, profile.v, profile.cell_length, w)
    return TwoPort(w, total, abcd_to_s(total, profile.Z0), profile.Z0)


@dataclass
class StopbandReport:
    center: float
    width: float
    min_s21_db: float
    edges: tuple
    edge_clipped: bool


def _crossing(f, y, i0, level, step):
    i = i0
    while 0 <= i + step < len(y) and y[i + step] < level:
        i += step
    j = i + step
    if not 0 <= j < len(y):
        return f[i], True
    t = (level - y[i]) / (y[j] - y[i])
    return f[i] + t * (f[j] - f[i]), False


def stopband_report(two_port: TwoPort, threshold_db: float = -3.0) -> StopbandReport:
    """Stopband around the transmission minimum (frequencies in Hz).

    Centre is the midpoint of the two points at half the peak depth in dB;
    width spans the contiguous region below ``threshold_db``.
    """
    f = two_port.omega / (2 * np.pi)
    y = two_port.s21_db
    i0 = int(np.argmin(y))
    ymin = float(y[i0])
    if ymin > threshold_db:
        raise NoStopbandError(f"transmission never falls below {threshold_db} dB")
    lo_h, clip1 = _crossing(f, y, i0, ymin / 2, -1)
    hi_h, clip2 = _crossing(f, y, i0, ymin / 2, +1)
    lo_w, clip3 = _crossing(f, y, i0, threshold_db, -1)
    hi_w, clip4 = _crossing(f, y, i0, threshold_db, +1)
    clipped = clip1 or clip2 or clip3 or clip4
    if clipped:
        warnings.warn("stopband edge reaches the end of the sweep", stacklevel=2)
    return StopbandReport(0.5 * (lo_h + hi_h), hi_w - lo_w, ymin, (lo_w, hi_w), clipped)
