"""Lindblad dynamics, steady states, adjoint reduced models and decay-rate extraction.

Density matrices are vectorized column-major (``rho.reshape(-1, order="F")``), so
``vec(A X B) = (B^T kron A) vec(X)``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from math import factorial
from typing import Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import null_space

from .errors import ClosureError, NumericalError, ValidationError
from .fock import FockSpace, OperatorMatrix

KINDS = ("ladder_projector", "mode_lowering", "dephasing", "operator")
SIX_LEVELS = ((0, 0), (1, 0), (2, 0), (3, 0), (4, 0), (0, 1))


@dataclass(frozen=True)
class DissipatorSpec:
    """One dissipator ``rate * D[L]``.

    ``target`` is the level k for ``ladder_projector`` (L = |k-1><k| on the
    memory), a mode label for ``mode_lowering`` and ``dephasing`` (L = n), or a
    full-space matrix for ``operator``.
    """

    kind: str
    rate: float
    target: object = None
    mode: str = "a"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown dissipator kind {self.kind!r}")
        if not np.isfinite(self.rate) or self.rate < 0:
            raise ValidationError("dissipator rates must be finite and non-negative")

    def jump_operator(self, space: FockSpace) -> np.ndarray:
        if self.kind == "operator":
            op = np.asarray(self.target, dtype=complex)
            if op.shape != (space.dim, space.dim):
                raise ValidationError("custom jump operator has the wrong shape")
            return op
        mode = self.mode if self.kind == "ladder_projector" else self.target
        idx = space.mode_index(mode)
        d = space.mode_dims[idx]
        if self.kind == "ladder_projector":
            k = int(self.target)
            if not 1 <= k < d:
                raise ValidationError(f"ladder level {k} outside truncation {d}")
            single = np.zeros((d, d))
            single[k - 1, k] = 1.0
        elif self.kind == "mode_lowering":
            single = np.diag(np.sqrt(np.arange(1, d, dtype=float)), 1)
        else:
            single = np.diag(np.arange(d, dtype=float))
        out = np.array([[1.0 + 0j]])
        for i, di in enumerate(space.mode_dims):
            out = np.kron(out, single if i == idx else np.eye(di))
        return out


@dataclass(frozen=True, eq=False)
class LindbladModel:
    """Hamiltonian plus dissipators, optionally restricted to a set of basis states."""

    hamiltonian: OperatorMatrix
    dissipators: tuple = ()
    states: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "dissipators", tuple(self.dissipators))
        h = self.hamiltonian
        if h.hermiticity_error() > 1e-12 * max(1.0, float(np.abs(h.data).max())):
            raise ValidationError("Hamiltonian is not Hermitian")
        for d in self.dissipators:
            if not isinstance(d, DissipatorSpec):
                raise ValidationError("dissipators must be DissipatorSpec instances")
        if self.states is not None:
            idx = [self.hamiltonian.space.index(s) for s in self.states]
            if len(set(idx)) != len(idx):
                raise ValidationError("restriction states must be distinct")

    @property
    def space(self) -> FockSpace:
        return self.hamiltonian.space

    @property
    def indices(self) -> np.ndarray:
        if self.states is None:
            return np.arange(self.space.dim)
        return np.array([self.space.index(s) for s in self.states])

    @property
    def dim(self) -> int:
        return len(self.indices)

    def matrices(self):
        """Restricted Hamiltonian and list of (rate, jump operator) pairs."""
        ix = np.ix_(self.indices, self.indices)
        h = self.hamiltonian.data[ix]
        jumps = [(d.rate, d.jump_operator(self.space)[ix]) for d in self.dissipators if d.rate > 0]
        return h, jumps

    def restrict(self, op) -> np.ndarray:
        data = op.data if isinstance(op, OperatorMatrix) else np.asarray(op)
        return data[np.ix_(self.indices, self.indices)]

    def basis_index(self, occupations) -> int:
        full = self.space.index(occupations)
        hits = np.nonzero(self.indices == full)[0]
        if len(hits) == 0:
            raise ValidationError(f"state {tuple(occupations)} is outside the model subspace")
        return int(hits[0])

    def projector(self, occupations) -> np.ndarray:
        p = np.zeros((self.dim, self.dim), dtype=complex)
        i = self.basis_index(occupations)
        p[i, i] = 1.0
        return p


def paper_dissipators(kappa_b: float, gammas: Sequence[float], kappa_phi: float) -> tuple:
    """``kappa_b D[b]``, ``gamma_k D[|k-1><k|]`` for k = 1.., and ``2 kappa_phi D[a^dag a]``."""
    out = [DissipatorSpec("mode_lowering", kappa_b, "b")]
    for k, g in enumerate(gammas, start=1):
        out.append(DissipatorSpec("ladder_projector", g, k, "a"))
    out.append(DissipatorSpec("dephasing", 2 * kappa_phi, "a"))
    return tuple(out)


def build_liouvillian(model: LindbladModel) -> np.ndarray:
    """Superoperator acting on column-major vectorized density matrices."""
    h, jumps = model.matrices()
    d = h.shape[0]
    eye = np.eye(d)
    L = -1j * (np.kron(eye, h) - np.kron(h.T, eye))
    for rate, c in jumps:
        cdc = c.conj().T @ c
        L += rate * (np.kron(c.conj(), c) - 0.5 * np.kron(eye, cdc) - 0.5 * np.kron(cdc.T, eye))
    return L


def vec(rho: np.ndarray) -> np.ndarray:
    return np.asarray(rho).reshape(-1, order="F")


def unvec(v: np.ndarray, d: int | None = None) -> np.ndarray:
    d = d or int(round(np.sqrt(v.size)))
    return np.asarray(v).reshape((d, d), order="F")


def _check_density(rho: np.ndarray, what: str, tol: float = 1e-8):
    if abs(np.trace(rho) - 1) > 1e-9:
        raise ValidationError(f"{what}: trace {np.trace(rho).real:.12g} differs from 1")
    herm = 0.5 * (rho + rho.conj().T)
    if np.abs(rho - herm).max() > 1e-9:
        raise ValidationError(f"{what}: not Hermitian")
    if np.linalg.eigvalsh(herm).min() < -tol:
        raise ValidationError(f"{what}: not positive semidefinite")


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    expectations: dict = field(default_factory=dict)


def evolve(model: LindbladModel, rho0: np.ndarray, times: Sequence[float],
           observables: dict | None = None, rtol: float = 1e-12, atol: float = 1e-14,
           method: str = "DOP853", liouvillian: np.ndarray | None = None) -> Trajectory:
    """Integrate the master equation with an adaptive Runge-Kutta scheme.

    ``observables`` maps names to matrices on the model subspace. Integrator
    failure and trace or positivity drift raise :class:`NumericalError`.
    """
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.shape != (model.dim, model.dim):
        raise ValidationError("initial state has the wrong shape")
    _check_density(rho0, "initial state")
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or np.any(np.diff(times) < 0):
        raise ValidationError("times must be a non-decreasing 1-D array")
    L = build_liouvillian(model) if liouvillian is None else liouvillian
    v0 = vec(rho0)
    if not np.any(L):
        ys = np.repeat(v0[:, None], len(times), axis=1)
    else:
        sol = solve_ivp(lambda t, y: L @ y, (times[0], times[-1]), v0, method=method,
                        t_eval=times, rtol=rtol, atol=atol)
        if not sol.success:
            raise NumericalError(f"integrator failed: {sol.message}")
        ys = sol.y
    d = model.dim
    states = np.stack([unvec(ys[:, k], d) for k in range(len(times))])
    for k, rho in enumerate(states):
        tr = np.trace(rho).real
        if abs(tr - 1) > 1e-9:
            raise NumericalError(f"trace drift {tr - 1:.3e} at t = {times[k]:.3e}")
        if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min() < -1e-8:
            raise NumericalError(f"negative eigenvalue at t = {times[k]:.3e}")
    expect = {}
    for name, op in (observables or {}).items():
        op = np.asarray(op)
        expect[name] = np.einsum("ij,tji->t", op, states)
    return Trajectory(times, states, expect)


def steady_state(liouvillian: np.ndarray, kernel_tol: float = 1e-10) -> np.ndarray:
    """Unique steady state from the smallest right singular vector."""
    L = np.asarray(liouvillian)
    n = L.shape[0]
    d = int(round(np.sqrt(n)))
    if d * d != n:
        raise ValidationError("superoperator size is not a perfect square")
    u, s, vh = np.linalg.svd(L)
    scale = max(s[0], 1e-300)
    if n > 1 and s[-2] < kernel_tol * scale:
        raise NumericalError(f"degenerate kernel: second smallest singular value {s[-2]:.3e}")
    rho = unvec(vh[-1].conj(), d)
    tr = np.trace(rho)
    if abs(tr) < 1e-14:
        raise NumericalError("kernel vector has zero trace")
    rho = rho / tr
    rho = 0.5 * (rho + rho.conj().T)
    res = np.linalg.norm(L @ vec(rho)) / scale
    if res > 1e-8:
        raise NumericalError(f"steady-state residual {res:.3e}")
    if np.linalg.eigvalsh(rho).min() < -1e-8:
        raise NumericalError("steady state is not positive")
    return rho


def apply_adjoint(model: LindbladModel, op: np.ndarray, _cache=None) -> np.ndarray:
    """Heisenberg-picture generator: i[H, O] + sum rate (L^dag O L - {L^dag L, O}/2)."""
    h, jumps = _cache if _cache is not None else model.matrices()
    out = 1j * (h @ op - op @ h)
    for rate, c in jumps:
        cd = c.conj().T
        out += rate * (cd @ op @ c - 0.5 * (cd @ c @ op + op @ cd @ c))
    return out


@dataclass
class AdjointGenerator:
    """``d<O_i>/dt = sum_j M_ij <O_j>`` on an operator basis."""

    operator_basis: list
    matrix: np.ndarray
    labels: list = field(default_factory=list)

    def __post_init__(self):
        n = len(self.operator_basis)
        if self.matrix.shape != (n, n):
            raise ValidationError("generator matrix does not match basis length")


def adjoint_generator(model: LindbladModel, basis: Sequence[np.ndarray],
                      tol: float = 1e-8, labels=None) -> AdjointGenerator:
    """Project the adjoint generator onto ``basis``; raise if the basis is not closed."""
    mats = [np.asarray(b.data if isinstance(b, OperatorMatrix) else b, dtype=complex) for b in basis]
    d = model.dim
    for m in mats:
        if m.shape != (d, d):
            raise ValidationError("basis operator has the wrong shape")
    B = np.stack([m.reshape(-1) for m in mats], axis=1)
    cache = model.matrices()
    images = np.stack([apply_adjoint(model, m, cache).reshape(-1) for m in mats], axis=1)
    coef, *_ = np.linalg.lstsq(B, images, rcond=None)
    resid = images - B @ coef
    scale = max(1.0, float(np.abs(images).max()))
    worst = float(np.abs(resid).max()) / scale
    if worst > tol:
        raise ClosureError(f"basis not closed under the adjoint generator (residual {worst:.3e})")
    return AdjointGenerator(list(mats), coef.T.copy(), list(labels or []))


def closure_basis(model: LindbladModel, seeds: Sequence[np.ndarray], max_size: int | None = None,
                  tol: float = 1e-10, include_identity: bool = True, extra_maps=()) -> list:
    """Orthonormal (Hilbert-Schmidt) basis of the smallest adjoint-invariant space containing ``seeds``.

    The normalized identity comes first when ``include_identity`` is set. ``max_size``
    bounds the number of non-identity operators; exceeding it raises
    :class:`ClosureError`. ``extra_maps`` are further linear maps the span must
    be invariant under.
    """
    d = model.dim
    cache = model.matrices()
    basis: list = []

    def add(op):
        v = op.copy()
        for _ in range(2):
            for b in basis:
                v = v - np.vdot(b, v) * b
        nrm = np.linalg.norm(v)
        ref = max(np.linalg.norm(op), 1.0)
        if nrm > tol * ref:
            basis.append(v / nrm)
            return True
        return False

    if include_identity:
        add(np.eye(d, dtype=complex) / np.sqrt(d))
    n_fixed = len(basis)
    queue = [np.asarray(s, dtype=complex) for s in seeds]
    for s in queue:
        add(s)
    k = n_fixed
    while k < len(basis):
        add(apply_adjoint(model, basis[k], cache))
        for f in extra_maps:
            add(f(basis[k]))
        if max_size is not None and len(basis) - n_fixed > max_size:
            raise ClosureError(f"closure exceeds {max_size} operators")
        k += 1
    return basis


def adjoint_steady_expectations(gen: AdjointGenerator, kernel_tol: float = 1e-9) -> np.ndarray:
    """Steady expectation values of the basis operators from the kernel of M.

    The first basis operator must be the normalized identity.
    """
    M = gen.matrix
    ident = gen.operator_basis[0]
    d = ident.shape[0]
    if np.abs(ident - np.eye(d) / np.sqrt(d)).max() > 1e-12:
        raise ValidationError("first basis operator must be the normalized identity")
    s = np.linalg.svd(M, compute_uv=False)
    scale = max(s[0], 1e-300)
    ns = null_space(M, rcond=kernel_tol)
    if ns.shape[1] != 1:
        raise NumericalError(f"kernel of the adjoint matrix has dimension {ns.shape[1]}")
    x = ns[:, 0]
    if abs(x[0]) < 1e-14:
        raise NumericalError("kernel vector has no identity component")
    x = x * (1 / np.sqrt(d)) / x[0]
    if np.linalg.norm(M @ x) > 1e-8 * scale * np.linalg.norm(x):
        raise NumericalError("adjoint steady-state residual too large")
    return x


def expectation_from_basis(gen: AdjointGenerator, values: np.ndarray, op: np.ndarray) -> complex:
    """<op> given the expectation values of an orthonormal basis containing op."""
    coeffs = np.array([np.vdot(b, op) for b in gen.operator_basis])
    recon = sum(c * b for c, b in zip(coeffs, gen.operator_basis))
    if np.abs(recon - op).max() > 1e-9 * max(1.0, np.abs(op).max()):
        raise ClosureError("operator lies outside the basis span")
    return complex(np.dot(coeffs, values))


def three_level_model(g4_eff: float, kappa_b: float, gamma4_direct: float,
                      kappa_phi: float) -> LindbladModel:
    """Dark state D, A = |4,0>, B = |0,1> with memory photon numbers (0, 4, 0)."""
    for x in (kappa_b, gamma4_direct, kappa_phi):
        if x < 0:
            raise ValidationError("rates must be non-negative")
    space = FockSpace((3,), ("dab",))
    h = np.zeros((3, 3), dtype=complex)
    h[1, 2] = h[2, 1] = g4_eff
    ham = OperatorMatrix(space, h, unit="angular-frequency", hermitian=True)
    la = np.zeros((3, 3)); la[0, 1] = 1
    lb = np.zeros((3, 3)); lb[0, 2] = 1
    n = np.diag([0.0, 4.0, 0.0])
    diss = (DissipatorSpec("operator", gamma4_direct, la),
            DissipatorSpec("operator", kappa_b, lb),
            DissipatorSpec("operator", 2 * kappa_phi, n))
    return LindbladModel(ham, diss)


def reduce_three_level(g4_eff: float, kappa_b: float, gamma4_direct: float = 0.0,
                       kappa_phi: float = 0.0) -> AdjointGenerator:
    """4x4 adjoint generator on {|A><A|, |B><B|, |A><B|, |B><A|}."""
    model = three_level_model(g4_eff, kappa_b, gamma4_direct, kappa_phi)
    basis = []
    for i, j in ((1, 1), (2, 2), (1, 2), (2, 1)):
        m = np.zeros((3, 3), dtype=complex)
        m[i, j] = 1
        basis.append(m)
    return adjoint_generator(model, basis, labels=["AA", "BB", "AB", "BA"])


def extract_decay_rate(generator: AdjointGenerator, target: int = 0,
                       zero_tol: float = 1e-12, allow_zero: bool = False) -> float:
    """Decay rate -Re(lambda) of the eigenvalue with the smallest |Re lambda|.

    Eigenvalues whose real parts tie (within 1e-9 relative) are disambiguated by
    the weight of their eigenvector on basis element ``target``. An eigenvalue
    with |lambda| below ``zero_tol`` signals a conserved quantity and raises,
    unless ``allow_zero`` is set, in which case 0 is returned.
    """
    w, v = np.linalg.eig(generator.matrix)
    if np.any(np.abs(w) <= zero_tol):
        if allow_zero:
            return 0.0
        raise NumericalError("generator has a zero eigenvalue; remove the conserved quantity")
    re = np.abs(w.real)
    rmin = re.min()
    cand = np.nonzero(re <= rmin * (1 + 1e-9) + zero_tol)[0]
    weights = np.abs(v[target, cand]) / np.linalg.norm(v[:, cand], axis=0)
    k = cand[int(np.argmax(weights))]
    return float(-w[k].real)


def population_decay_rate(model: LindbladModel, occupations, weight_tol: float = 1e-7) -> float:
    """Asymptotic decay rate of the population of one basis state started in that state.

    The state is expanded on the Liouvillian eigenmodes; among modes that
    contribute to its population, the one with the smallest |Re lambda| sets the rate.
    """
    L = build_liouvillian(model)
    w, R = np.linalg.eig(L)
    Linv = np.linalg.inv(R)
    d = model.dim
    i = model.basis_index(occupations)
    k_pop = i + d * i
    contrib = np.abs(Linv[:, k_pop] * R[k_pop, :])
    scale = contrib.max()
    mask = (contrib > weight_tol * scale) & (np.abs(w) > 1e-9 * np.abs(w).max())
    if not np.any(mask):
        raise NumericalError("no decaying mode contributes to the population")
    idx = np.nonzero(mask)[0]
    k = idx[int(np.argmin(np.abs(w[idx].real)))]
    return float(-w[k].real)


def damped_rabi_rate(g4: float, kappa_b: float) -> float:
    """kappa_b/2 - Re sqrt(kappa_b^2/4 - 96 g4^2)."""
    disc = kappa_b**2 / 4 - 96 * g4**2
    return float(kappa_b / 2 - np.sqrt(disc) if disc > 0 else kappa_b / 2)


def adiabatic_gamma4(g4: float, kappa_b: float) -> float:
    """Four-photon loss rate 4 g4^2 / kappa_b; the |4> population decays at 4! times this."""
    if kappa_b <= 0:
        raise ValidationError("kappa_b must be positive")
    if 4 * abs(g4) * np.sqrt(24) > kappa_b / 2:
        warnings.warn("exchange too strong for adiabatic elimination", stacklevel=2)
    return float(4 * g4**2 / kappa_b)


@dataclass
class SelectivityReport:
    worst_ratio: float
    worst_transition: tuple
    passed: bool
    ratios: dict


def selectivity_guard(chi, g4: float, xi_b: complex, threshold: float = 0.1) -> SelectivityReport:
    """Worst ratio of coupling to detuning over the off-resonant exchange and drive transitions."""
    ratios = {}
    keys = set(chi.chi)
    for (n, m) in sorted(keys):
        if (n, m) == (0, 0):
            continue
        if (n + 4, m) in keys and (n, m + 1) in keys:
            coup = abs(g4) * np.sqrt(factorial(n + 4) / factorial(n) * (m + 1))
            det = abs(chi[(n + 4, m)] - chi[(n, m + 1)])
            ratios[("exchange", n, m)] = _ratio(coup, det)
        if (n, m + 1) in keys:
            coup = abs(xi_b) * np.sqrt(m + 1)
            det = abs(chi[(n, m + 1)] - chi[(n, m)])
            ratios[("drive", n, m)] = _ratio(coup, det)
    if not ratios:
        return SelectivityReport(0.0, (), True, ratios)
    worst = max(ratios, key=ratios.get)
    return SelectivityReport(ratios[worst], worst, ratios[worst] < threshold, ratios)


def _ratio(coupling: float, detuning: float) -> float:
    if coupling == 0:
        return 0.0
    if detuning == 0:
        return np.inf
    return coupling / detuning


GAMMA1_DEFAULT = 1 / 7.5e-6


def default_gammas(gamma1: float = GAMMA1_DEFAULT, levels: int = 4) -> tuple:
    """Ladder relaxation rates gamma_k = k gamma_1 (harmonic scaling as a placeholder)."""
    return tuple(k * gamma1 for k in range(1, levels + 1))


def six_level_model(chi, g4: float, pump, drive, kappa_b: float, gammas: Sequence[float],
                    kappa_phi: float) -> LindbladModel:
    """RWA model restricted to {|0,0>, |1,0>, |2,0>, |3,0>, |4,0>, |0,1>}."""
    from .rwa import build_rwa_hamiltonian

    if len(gammas) != 4:
        raise ValidationError("six-level model needs four ladder rates")
    h = build_rwa_hamiltonian(chi, g4, pump, drive, n_dim=5, m_dim=2)
    return LindbladModel(h, paper_dissipators(kappa_b, gammas, kappa_phi), SIX_LEVELS)
