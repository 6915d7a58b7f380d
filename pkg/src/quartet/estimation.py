"""Parameter estimation: parabola curvature, bounded Levenberg-Marquardt, and the model fits."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import expm
from scipy.optimize import OptimizeWarning, curve_fit

from .errors import ClosureError, NumericalError, ValidationError

TWO_PI = 2 * np.pi


def parabola_curvature(xs, ys):
    """Least-squares quadratic fit; returns (2 * quadratic coefficient, vertex x, RMS residual)."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValidationError("xs and ys must be 1-D arrays of equal length")
    if len(x) < 4:
        raise ValidationError("need at least 4 points")
    if len(np.unique(x)) < 3:
        raise NumericalError("rank-deficient design: fewer than 3 distinct abscissae")
    x0 = x.mean()
    sx = max(np.abs(x - x0).max(), 1e-300)
    u = (x - x0) / sx
    A = np.stack([np.ones_like(u), u, u * u], axis=1)
    coef, _, rank, _ = np.linalg.lstsq(A, y, rcond=None)
    if rank < 3:
        raise NumericalError("rank-deficient design")
    c0, c1, c2 = coef
    curvature = 2 * c2 / sx**2
    vertex = x0 - c1 * sx / (2 * c2) if c2 != 0 else np.nan
    resid = float(np.sqrt(np.mean((A @ coef - y) ** 2)))
    return float(curvature), float(vertex), resid


@dataclass
class FitProblem:
    """Residual function r(x) over named parameters, with box bounds."""

    residual: Callable
    x0: Sequence[float]
    lower: Sequence[float] | None = None
    upper: Sequence[float] | None = None
    names: Sequence[str] | None = None
    tol: float = 1e-10
    x_scale: Sequence[float] | None = None

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float)
        n = self.x0.size
        self.lower = np.full(n, -np.inf) if self.lower is None else np.asarray(self.lower, dtype=float)
        self.upper = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float)
        if self.lower.shape != (n,) or self.upper.shape != (n,):
            raise ValidationError("bounds must match the parameter count")
        if np.any(self.x0 < self.lower) or np.any(self.x0 > self.upper):
            raise ValidationError("initial values lie outside the bounds")
        self.names = list(self.names) if self.names is not None else [f"p{i}" for i in range(n)]
        if self.x_scale is None:
            self.x_scale = np.where(np.abs(self.x0) > 0, np.abs(self.x0), 1.0)
        self.x_scale = np.asarray(self.x_scale, dtype=float)


@dataclass
class FitResult:
    params: dict
    x: np.ndarray
    cost: float
    iterations: int
    converged: bool
    residuals: np.ndarray
    history: list = field(default_factory=list)
    covariance: np.ndarray | None = None
    initial_cost: float = np.nan

    def stderr(self) -> dict:
        if self.covariance is None:
            return {k: np.nan for k in self.params}
        sd = np.sqrt(np.clip(np.diag(self.covariance), 0, None))
        return dict(zip(self.params, sd))


def _jacobian(fun, x, r0, lo, hi, scale):
    n = x.size
    J = np.empty((r0.size, n))
    for i in range(n):
        h = 1e-7 * max(abs(x[i]), scale[i])
        xp = x.copy()
        if x[i] + h > hi[i]:
            h = -h
        xp[i] = x[i] + h
        J[:, i] = (fun(xp) - r0) / h
    return J


def _lm(problem: FitProblem, x0: np.ndarray, max_iter: int):
    fun = problem.residual
    lo, hi, scale = problem.lower, problem.upper, problem.x_scale
    x = x0.copy()
    r = np.asarray(fun(x), dtype=float)
    if not np.all(np.isfinite(r)):
        raise NumericalError("residual is not finite at the initial point")
    cost = float(r @ r)
    history = [np.sqrt(cost)]
    lam = 0.0
    converged = False
    it = 0
    J = _jacobian(fun, x, r, lo, hi, scale)
    for it in range(1, max_iter + 1):
        Js = J * scale
        g = Js.T @ r
        A = Js.T @ Js
        accepted = False
        for _ in range(30):
            D = np.diag(np.diag(A)) if lam > 0 else 0.0
            try:
                step = -np.linalg.lstsq(A + lam * (D + 1e-12 * np.eye(len(x)) * np.trace(A)), g,
                                        rcond=None)[0] * scale
            except np.linalg.LinAlgError as exc:
                raise NumericalError("singular normal equations") from exc
            x_new = np.clip(x + step, lo, hi)
            r_new = np.asarray(fun(x_new), dtype=float)
            cost_new = float(r_new @ r_new) if np.all(np.isfinite(r_new)) else np.inf
            if cost_new <= cost:
                accepted = True
                break
            lam = max(lam * 10, 1e-4)
        if not accepted:
            converged = True
            break
        dx = np.linalg.norm((x_new - x) / scale)
        dcost = cost - cost_new
        x, r, cost = x_new, r_new, cost_new
        history.append(np.sqrt(cost))
        lam = lam / 10 if lam > 1e-10 else 0.0
        if dx < problem.tol * (1 + np.linalg.norm(x / scale)) or dcost <= problem.tol * max(cost, 1e-300) \
                or cost < 1e-300:
            converged = True
            break
        J = _jacobian(fun, x, r, lo, hi, scale)
    return x, r, cost, it, converged, history


def least_squares(problem: FitProblem, max_iter: int = 100, n_starts: int = 0,
                  seed: int = 0) -> FitResult:
    """Projected Levenberg-Marquardt; optional random restarts inside finite bounds.

    Accepted steps never increase the cost, so ``history`` is non-increasing.
    """
    starts = [problem.x0]
    if n_starts:
        rng = np.random.default_rng(seed)
        lo = np.where(np.isfinite(problem.lower), problem.lower, problem.x0 - 2 * problem.x_scale)
        hi = np.where(np.isfinite(problem.upper), problem.upper, problem.x0 + 2 * problem.x_scale)
        starts += [rng.uniform(lo, hi) for _ in range(n_starts)]
    initial = np.asarray(problem.residual(problem.x0), dtype=float)
    best = None
    for s in starts:
        try:
            out = _lm(problem, np.asarray(s, dtype=float), max_iter)
        except NumericalError:
            if best is None and s is starts[-1]:
                raise
            continue
        if best is None or out[2] < best[2]:
            best = out
    x, r, cost, it, converged, history = best
    cov = None
    m, n = r.size, x.size
    if m > n:
        J = _jacobian(problem.residual, x, r, problem.lower, problem.upper, problem.x_scale)
        try:
            cov = np.linalg.pinv(J.T @ J) * cost / (m - n)
        except np.linalg.LinAlgError:
            cov = None
    return FitResult(dict(zip(problem.names, x)), x, float(np.sqrt(cost)), it, converged, r,
                     history, cov, float(np.linalg.norm(initial)))


# ---------------------------------------------------------------- decay and spectrum models

def four_by_four_population(g4: float, kappa_b: float, gamma4: float, kappa_phi: float,
                            times: np.ndarray) -> np.ndarray:
    """<|A><A|>(t) from the 4x4 adjoint reduction, starting in A."""
    from .lindblad import reduce_three_level

    gen = reduce_three_level(g4 * np.sqrt(24), kappa_b, gamma4, kappa_phi)
    props = expm(np.asarray(times, dtype=float)[:, None, None] * gen.matrix[None])
    return props[:, 0, 0].real


def exponential_deviation(times, population, window: float = 5.0) -> float:
    """Largest residual of a single-exponential fit, relative to the initial amplitude.

    The fit ``A exp(-G t)`` (A and G free) is restricted to ``t <= window / G``
    using a first fit on the whole trace to set G.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(population, dtype=float)
    if t.shape != y.shape or t.size < 4 or y[0] <= 0:
        raise ValidationError("need >= 4 samples of a decaying trace with positive start")

    def model(tt, a, g):
        return a * np.exp(-g * tt)

    g0 = max(initial_g4_slope(t, y), 1.0 / max(t[-1], 1e-300))
    sel = np.ones_like(t, dtype=bool)
    for _ in range(2):
        with warnings.catch_warnings():
            # covariance is unused; flat traces make it undefined
            warnings.simplefilter("ignore", OptimizeWarning)
            (a, g), _ = curve_fit(model, t[sel], y[sel], p0=(y[0], g0), maxfev=5000)
        g0 = g
        sel = t <= window / max(g, 1e-300)
        if sel.sum() < 4:
            sel[:4] = True
    return float(np.max(np.abs(model(t[sel], a, g) - y[sel])) / y[0])


def initial_g4_slope(t: np.ndarray, y: np.ndarray) -> float:
    ok = y > 0.2 * y.max()
    if ok.sum() < 2:
        return 0.0
    return float(-np.polyfit(t[ok], np.log(y[ok]), 1)[0])


def initial_g4(times, signal, kappa_b: float, gamma4: float) -> float:
    """Rough g4 from the early log-slope of a decay curve, inverting the damped-Rabi rate."""
    t = np.asarray(times, dtype=float)
    y = np.asarray(signal, dtype=float)
    ok = y > 0.2 * y.max()
    if ok.sum() < 3:
        return np.sqrt(kappa_b**2 / 4 / 96)
    slope = -np.polyfit(t[ok], np.log(y[ok]), 1)[0]
    gam = max(slope - gamma4, 0.0)
    gam = min(gam, 0.999 * kappa_b / 2)
    return float(np.sqrt(max(kappa_b**2 / 4 - (kappa_b / 2 - gam) ** 2, 0.0) / 96))


class SpectrumSolver:
    """Batched steady-state <b> of the six-level model on a fixed adjoint basis.

    The operator basis is the closure of {b} at a reference detuning. The
    adjoint matrix is affine in the detuning, so every sweep point reuses it.
    """

    def __init__(self, model_at, delta_ref: float = 0.0, max_size: int = 11):
        from .lindblad import adjoint_generator, closure_basis
        from .spectroscopy import _detuning_generator

        m0 = model_at(delta_ref)
        b = _b_six(m0)
        # adjoint of the detuning term, i[D, O]; the basis must be invariant under it too
        D = _detuning_generator(m0)
        self.basis = closure_basis(m0, [b], max_size=max_size,
                                   extra_maps=[lambda o: 1j * (D @ o - o @ D)])
        gen0 = adjoint_generator(m0, self.basis)
        B = np.stack([o.reshape(-1) for o in self.basis], axis=1)
        images = np.stack([(1j * (D @ o - o @ D)).reshape(-1) for o in self.basis], axis=1)
        coef = B.conj().T @ images
        if np.abs(images - B @ coef).max() > 1e-10 * max(1.0, np.abs(images).max()):
            raise ClosureError("basis not closed under the detuning term")
        self.M1 = coef.T
        self.M0 = gen0.matrix - delta_ref * self.M1
        self.bcoef = np.array([np.vdot(o, b) for o in self.basis])
        self.d = b.shape[0]

    def field(self, deltas: np.ndarray) -> np.ndarray:
        deltas = np.asarray(deltas, dtype=float)
        M = self.M0[None] + deltas[:, None, None] * self.M1[None]
        x0 = 1 / np.sqrt(self.d)
        rhs = -M[:, 1:, 0] * x0
        x = np.linalg.solve(M[:, 1:, 1:], rhs[..., None])[..., 0]
        return self.bcoef[0] * x0 + x @ self.bcoef[1:]


def _b_six(model) -> np.ndarray:
    from .spectroscopy import _lowering_b

    return _lowering_b(model)


@dataclass
class SweepContext:
    """Fixed parameters shared by all datasets of a pump-amplitude sweep."""

    chi: object
    kappa_b: float
    gammas: tuple
    kappa_c: float | None = None
    Delta: float = 0.0

    def six_level(self, g4: float, xi_b: complex, kappa_phi: float, delta: float):
        from .lindblad import six_level_model
        from .rwa import DriveSpec, PumpSpec

        return six_level_model(self.chi, g4, PumpSpec(0.0, self.Delta), DriveSpec(xi_b, delta),
                               self.kappa_b, self.gammas, kappa_phi)

    def decay_model(self, g4, kappa_phi, scale, times):
        return scale * four_by_four_population(g4, self.kappa_b, self.gammas[3], kappa_phi, times)

    def spectrum_model(self, g4, kappa_phi, line_scale, xi_b, deltas, fast: bool = True):
        kc = self.kappa_b if self.kappa_c is None else self.kappa_c
        if fast:
            solver = SpectrumSolver(lambda d: self.six_level(g4, xi_b, kappa_phi, d), 0.0)
            b = solver.field(deltas)
        else:
            from .spectroscopy import steady_buffer_field
            from .rwa import DriveSpec

            m = self.six_level(g4, xi_b, kappa_phi, 0.0)
            b = steady_buffer_field(m, DriveSpec(xi_b, 0.0), deltas, "full")
        return line_scale * (1 - 1j * kc * b / np.conj(xi_b))

    def full_decay(self, g4, kappa_phi, scale, times):
        from .lindblad import evolve

        m = self.six_level(g4, 0.0, kappa_phi, 0.0)
        rho0 = m.projector((4, 0))
        tr = evolve(m, rho0, times, {"A": m.projector((4, 0))})
        return scale * tr.expectations["A"].real


@dataclass
class SweepFit:
    g4: list
    kappa_phi: float
    signal_scale: float
    line_scale: float
    xi_b: float
    result: FitResult
    stderr: dict
    fast_full_discrepancy: float
    flagged: bool


def fit_g4_sweep(decays: Sequence[tuple], spectra: Sequence[tuple], ctx: SweepContext,
                 initial: dict | None = None, verify: bool = True, max_iter: int = 60,
                 n_starts: int = 0, seed: int = 0) -> SweepFit:
    """Joint fit of decay curves and reflection spectra over pump amplitudes.

    ``decays[j] = (times, signal)`` and ``spectra[j] = (detunings, complex r)``
    for amplitude j. Free parameters: one g4 per amplitude, kappa_phi, the
    decay signal scale, the spectrum line scale and the drive rate xi_b.
    """
    if len(decays) != len(spectra) or len(decays) == 0:
        raise ValidationError("need one decay and one spectrum per amplitude")
    k = len(decays)
    g_guess = [initial_g4(t, y, ctx.kappa_b, ctx.gammas[3]) for t, y in decays]
    init = {"g4": g_guess, "kappa_phi": TWO_PI * 50e3, "signal_scale": 1.0,
            "line_scale": 1.0, "xi_b": TWO_PI * 150e3, **(initial or {})}
    unit = TWO_PI * 1e3
    x0 = np.array(list(init["g4"]) + [init["kappa_phi"], init["signal_scale"] * unit,
                                      init["line_scale"] * unit, init["xi_b"]]) / unit
    names = [f"g4_{j}" for j in range(k)] + ["kappa_phi", "signal_scale", "line_scale", "xi_b"]
    lower = np.array([0.0] * k + [0.0, 1e-3, 1e-3, 1.0])
    upper = np.array([2000.0] * k + [2000.0, 1e3, 1e3, 5000.0])
    x0 = np.clip(x0, lower, upper)

    def unpack(x):
        g = x[:k] * unit
        return g, x[k] * unit, x[k + 1], x[k + 2], x[k + 3] * unit

    def residual(x, fast=True):
        g, kphi, s_scale, l_scale, xib = unpack(x)
        parts = []
        for j in range(k):
            t, y = decays[j]
            model = ctx.decay_model(g[j], kphi, s_scale, np.asarray(t)) if fast else \
                ctx.full_decay(g[j], kphi, s_scale, np.asarray(t))
            parts.append(model - np.asarray(y))
            dl, r = spectra[j]
            rm = ctx.spectrum_model(g[j], kphi, l_scale, xib, np.asarray(dl), fast)
            diff = rm - np.asarray(r)
            parts.append(diff.real)
            parts.append(diff.imag)
        return np.concatenate(parts)

    problem = FitProblem(residual, x0, lower, upper, names, tol=1e-12,
                         x_scale=np.maximum(np.abs(x0), 1.0))
    res = least_squares(problem, max_iter=max_iter, n_starts=n_starts, seed=seed)
    g, kphi, s_scale, l_scale, xib = unpack(res.x)
    disc = 0.0
    if verify:
        fast_r = residual(res.x, True)
        full_r = residual(res.x, False)
        ref = max(np.linalg.norm(full_r), 1e-12)
        # compare model predictions, not residuals against data
        disc = float(np.linalg.norm(fast_r - full_r) / max(ref, _data_norm(decays, spectra)))
    sd = {}
    for name, val in res.stderr().items():
        i = names.index(name)
        sd[name] = val * (1.0 if name in ("signal_scale", "line_scale") else unit)
    return SweepFit(list(g), kphi, s_scale, l_scale, xib, res, sd, disc, disc > 0.02)


def _data_norm(decays, spectra) -> float:
    tot = 0.0
    for (t, y), (d, r) in zip(decays, spectra):
        tot += np.sum(np.abs(np.asarray(y)) ** 2) + np.sum(np.abs(np.asarray(r)) ** 2)
    return float(np.sqrt(tot))


# ---------------------------------------------------------------- e_sigma fit

def memory_transitions(params, bias, n_transitions: int, operators=None) -> np.ndarray:
    """Frequencies of the first ``n_transitions`` memory ladder transitions (rad/s)."""
    from .spectroscopy import fock_pair, transition_frequency

    ops = operators if operators is not None else params.operators()
    H = params.hamiltonian(bias, operators=ops).data
    out = []
    for n in range(n_transitions):
        lo, hi = fock_pair(params, "a", n, n + 1)
        out.append(transition_frequency(H, ops.space, lo, hi))
    return np.array(out)


def fit_e_sigma(measured: Sequence[float], params, bias, e_sigma0: float | None = None,
                operators=None) -> FitResult:
    """Fit the second-harmonic energy to measured memory ladder transitions (rad/s)."""
    from dataclasses import replace

    y = np.asarray(measured, dtype=float)
    if y.size < 3:
        raise ValidationError("need at least 3 transition frequencies")
    ops = operators if operators is not None else params.operators()
    unit = TWO_PI * 1e6
    start = (params.squid.e_sigma if e_sigma0 is None else e_sigma0) / unit

    def residual(x):
        p = replace(params, squid=params.squid.with_e_sigma(max(x[0], 0.0) * unit))
        return (memory_transitions(p, bias, y.size, ops) - y) / unit

    problem = FitProblem(residual, [max(start, 1.0)], [0.0], [1e4], ["e_sigma"], tol=1e-12)
    res = least_squares(problem, max_iter=50)
    if not res.converged:
        raise NumericalError("e_sigma fit did not converge")
    res.params = {"e_sigma": res.x[0] * unit}
    return res
