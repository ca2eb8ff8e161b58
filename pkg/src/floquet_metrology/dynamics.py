"""Time-ordered propagation, the metrological generator and the QFI.

Units have hbar = 1, so times are inverse energies.  The generator of a
trajectory ``U(t)`` is ``G = int_0^t_f U^dagger(s) dH/dlambda(s) U(s) ds``.
"""
from __future__ import annotations

import dataclasses
import hashlib
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from ._linalg import dagger, expm_hermitian, hermitize, phi_integral, spread
from .errors import (DegenerateGeneratorError, UndersampledDriveError,
                     ValidationError)
from .floquet import HarmonicDrive
from .pauli import DENSE_LIMIT, PauliOperator, to_dense

MIN_STEPS_PER_PERIOD = 40
DEGENERACY_RTOL = 1e-10
NORM_TOL = 1e-8
CONVENTIONS = {"var": 1.0, "four_var": 4.0}
_CHUNK_ELEMENTS = 4_000_000


def convention_factor(convention: str) -> float:
    try:
        return CONVENTIONS[convention]
    except KeyError:
        raise ValidationError(f"unknown QFI convention {convention!r}; use one of {sorted(CONVENTIONS)}") from None


@dataclass(frozen=True)
class ControlTable:
    """Coefficients ``c_i(t)`` on a uniform grid over ``[0, duration]``, linearly interpolated.

    ``coefficients`` has shape ``(len(basis), K + 1)``.
    """

    basis: tuple
    coefficients: np.ndarray
    duration: float

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=float)
        if c.ndim != 2 or c.shape[0] != len(self.basis) or c.shape[1] < 2:
            raise ValidationError(f"coefficient table shape {c.shape} does not match {len(self.basis)} basis elements")
        if not np.all(np.isfinite(c)):
            raise ValidationError("control coefficients must be finite")
        if not self.duration > 0:
            raise ValidationError("control table needs a positive duration")
        c.setflags(write=False)
        object.__setattr__(self, "basis", tuple(self.basis))
        object.__setattr__(self, "coefficients", c)

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(0.0, self.duration, self.coefficients.shape[1])

    def at(self, t) -> np.ndarray:
        """Interpolated coefficients, shape ``(d_c, len(t))``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        g = self.grid
        return np.stack([np.interp(t, g, row) for row in self.coefficients])


@dataclass(frozen=True, eq=False)
class HamiltonianSchedule:
    """``H(t) = static + lam * sum_j f_j(t) B_j + sum_k g_k(t) C_k + drive(t) + sum_i c_i(t) X_i``.

    The parameter enters only through ``lam_terms`` (pairs of an operator ``B_j`` and
    an envelope ``f_j`` or ``None`` for a constant), so ``dH/dlambda`` is exact.
    ``kicks`` are instantaneous lambda-independent unitaries ``exp(-i A)`` applied
    at the listed times, which must lie on the propagation grid.
    """

    n_sites: int
    static: PauliOperator
    lam_terms: tuple = ()
    lam: float = 0.0
    time_terms: tuple = ()
    drive: HarmonicDrive | None = None
    controls: ControlTable | None = None
    kicks: tuple = ()
    dense_limit: int = DENSE_LIMIT

    def __post_init__(self):
        object.__setattr__(self, "lam_terms", tuple((op, f) for op, f in self.lam_terms))
        object.__setattr__(self, "time_terms", tuple((op, f) for op, f in self.time_terms))
        object.__setattr__(self, "kicks", tuple(sorted(((float(t), np.asarray(a)) for t, a in self.kicks),
                                                       key=lambda x: x[0])))
        ops = [self.static] + [op for op, _ in self.lam_terms] + [op for op, _ in self.time_terms]
        if self.controls is not None:
            ops += list(self.controls.basis)
        if self.drive is not None and self.drive.components:
            ops += list(self.drive.components.values())
        for op in ops:
            if op.n_sites != self.n_sites:
                raise ValidationError(f"operator on {op.n_sites} sites in a {self.n_sites}-site schedule")
        for op in [self.static] + [o for o, _ in self.lam_terms] + [o for o, _ in self.time_terms]:
            if not op.is_hermitian(1e-12):
                raise ValidationError("schedule terms must be Hermitian")
        if self.controls is not None:
            for op in self.controls.basis:
                if not op.is_hermitian(1e-12):
                    raise ValidationError("control basis elements must be Hermitian")
        if not math.isfinite(self.lam):
            raise ValidationError("lambda must be finite")

    @property
    def dim(self) -> int:
        return 2 ** self.n_sites

    def with_lambda(self, lam: float) -> "HamiltonianSchedule":
        return dataclasses.replace(self, lam=float(lam))

    def with_controls(self, controls: ControlTable | None) -> "HamiltonianSchedule":
        return dataclasses.replace(self, controls=controls)

    @property
    def is_periodic(self) -> bool:
        """Time dependence comes from the drive alone."""
        return (self.drive is not None and self.controls is None and not self.time_terms and not self.kicks
                and all(f is None for _, f in self.lam_terms))

    @property
    def fastest_period(self) -> float | None:
        if self.drive is None or not self.drive.components:
            return None
        return 2 * math.pi / (self.drive.l_max * self.drive.omega)

    # symbolic views -------------------------------------------------------------
    def dlam(self, t: float = 0.0) -> PauliOperator:
        out = PauliOperator.zero(self.n_sites)
        for op, f in self.lam_terms:
            out = out + op * (1.0 if f is None else float(f(t)))
        return out

    def lam_part(self, t: float = 0.0) -> PauliOperator:
        return self.lam * self.dlam(t)

    def static_hamiltonian(self) -> PauliOperator:
        """Time-independent part including the parameter terms without envelopes."""
        out = self.static
        for op, f in self.lam_terms:
            if f is None:
                out = out + self.lam * op
        return out

    def evaluate(self, t: float) -> PauliOperator:
        out = self.static + self.lam_part(t)
        for op, g in self.time_terms:
            out = out + op * float(g(t))
        if self.drive is not None and self.drive.components:
            out = out + self.drive.evaluate(t)
        if self.controls is not None:
            c = self.controls.at(t)[:, 0]
            for ci, op in zip(c, self.controls.basis):
                out = out + float(ci) * op
        return out.hermitian_part()

    # dense machinery ------------------------------------------------------------
    @cached_property
    def _dense(self):
        """Stacked Hermitian matrices and a function returning their coefficients at times ``t``."""
        lim = self.dense_limit
        mats, coeff_fns = [to_dense(self.static, lim)], [lambda t: np.ones_like(t)]
        dmats, dfns = [], []
        for op, f in self.lam_terms:
            m = to_dense(op, lim)
            env = (lambda t: np.ones_like(t)) if f is None else _vectorize(f)
            mats.append(m)
            coeff_fns.append(lambda t, env=env: self.lam * env(t))
            dmats.append(m)
            dfns.append(env)
        for op, g in self.time_terms:
            mats.append(to_dense(op, lim))
            coeff_fns.append(_vectorize(g))
        if self.drive is not None:
            w = self.drive.omega
            for l in self.drive.harmonics:
                hl = to_dense(self.drive.components[l], lim)
                mats.append(hl + dagger(hl))
                coeff_fns.append(lambda t, l=l: np.cos(l * w * t))
                mats.append(1j * (hl - dagger(hl)))
                coeff_fns.append(lambda t, l=l: np.sin(l * w * t))
        n_fixed = len(mats)
        if self.controls is not None:
            mats.extend(to_dense(op, lim) for op in self.controls.basis)
        stack = np.array(mats, dtype=complex)
        dstack = np.array(dmats, dtype=complex) if dmats else np.zeros((0, self.dim, self.dim), complex)
        return stack, coeff_fns, n_fixed, dstack, dfns

    def _coefficients(self, t: np.ndarray) -> np.ndarray:
        stack, fns, n_fixed, _, _ = self._dense
        cols = [np.broadcast_to(np.asarray(f(t), dtype=float), t.shape) for f in fns]
        a = np.stack(cols, axis=1) if cols else np.zeros((t.size, 0))
        if self.controls is not None:
            a = np.concatenate([a, self.controls.at(t).T], axis=1)
        return a

    def hamiltonian_dense(self, t) -> np.ndarray:
        """``H(t)``; batched when ``t`` is an array."""
        tt = np.atleast_1d(np.asarray(t, dtype=float))
        stack = self._dense[0]
        out = np.tensordot(self._coefficients(tt), stack, axes=(1, 0))
        return out if np.ndim(t) else out[0]

    def dlam_dense(self, t) -> np.ndarray:
        tt = np.atleast_1d(np.asarray(t, dtype=float))
        _, _, _, dstack, dfns = self._dense
        if not dfns:
            out = np.zeros((tt.size, self.dim, self.dim), complex)
        else:
            a = np.stack([np.broadcast_to(np.asarray(f(tt), dtype=float), tt.shape) for f in dfns], axis=1)
            out = np.tensordot(a, dstack, axes=(1, 0))
        return out if np.ndim(t) else out[0]

    def control_matrices(self) -> np.ndarray:
        """Dense control basis, shape ``(d_c, dim, dim)``."""
        stack, _, n_fixed, _, _ = self._dense
        return stack[n_fixed:]

    @cached_property
    def fingerprint(self) -> str:
        h = hashlib.sha1()
        h.update(repr((self.n_sites, self.lam, self.static)).encode())
        for op, f in self.lam_terms + self.time_terms:
            h.update(repr((op, _callable_id(f))).encode())
        if self.drive is not None:
            h.update(repr((self.drive.omega, sorted(self.drive.components.items()))).encode())
        if self.controls is not None:
            h.update(repr((self.controls.basis, self.controls.duration)).encode())
            h.update(self.controls.coefficients.tobytes())
        for t, a in self.kicks:
            h.update(repr(t).encode())
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()

    def unrestricted_bound(self, t_f: float, steps: int = 1, convention: str = "var") -> float:
        """QFI bound ``(int_0^t_f spread(dH/dlambda) ds)^2 / 4`` (times the convention factor)."""
        factor = convention_factor(convention)
        if t_f <= 0:
            return 0.0
        if all(f is None for _, f in self.lam_terms):
            total = spread(self.dlam_dense(0.0)) * t_f
        else:
            steps = max(int(steps), 1)
            mids = (np.arange(steps) + 0.5) * (t_f / steps)
            w = np.linalg.eigvalsh(hermitize(self.dlam_dense(mids)))
            total = float(np.sum(w[:, -1] - w[:, 0]) * (t_f / steps))
        return factor * total ** 2 / 4


def _vectorize(f: Callable) -> Callable:
    def g(t):
        try:
            return np.asarray(f(t), dtype=float)
        except TypeError:
            return np.array([float(f(x)) for x in np.atleast_1d(t)])
    return g


def _callable_id(f) -> str:
    if f is None:
        return "const"
    return f"{getattr(f, '__module__', '')}.{getattr(f, '__qualname__', type(f).__name__)}#{id(f)}"


@dataclass
class PropagationResult:
    """Sampled trajectory.

    ``unitaries`` and ``partial_generators`` hold every grid point when stored,
    otherwise only the endpoints are kept in ``final`` and ``generator_final``.
    """

    time_grid: np.ndarray
    final: np.ndarray
    generator_final: np.ndarray
    steps: int
    steps_per_fastest_period: float | None
    fingerprint: str
    unitaries: np.ndarray | None = None
    partial_generators: np.ndarray | None = None
    quadrature: str = "exact"
    periods: int | None = None

    @property
    def t_f(self) -> float:
        return float(self.time_grid[-1])

    def unitarity_error(self) -> float:
        mats = self.unitaries if self.unitaries is not None else self.final[None]
        eye = np.eye(mats.shape[-1])
        return float(np.max(np.abs(dagger(mats) @ mats - eye)))


def _check_sampling(schedule: HamiltonianSchedule, dt: float, allow_undersampled: bool, minimum: int):
    period = schedule.fastest_period
    if period is None:
        return None
    per = period / dt if dt > 0 else math.inf
    if per < minimum - 1e-9 and not allow_undersampled:
        raise UndersampledDriveError(
            f"{per:.1f} steps per fastest drive period (2*pi/(l_max*omega) = {period:.3g}); "
            f"need at least {minimum}, i.e. step <= {period / minimum:.3g}")
    return per


def propagate(schedule: HamiltonianSchedule, t_f: float, steps: int, *, store: bool = True,
              allow_undersampled: bool = False, min_steps_per_period: int = MIN_STEPS_PER_PERIOD,
              quadrature: str = "exact") -> PropagationResult:
    """Piecewise-constant propagation with the Hamiltonian sampled at step midpoints.

    ``U(t_{k+1}) = exp(-i H(t_k + dt/2) dt) U(t_k)``.  The generator is
    accumulated alongside.  With ``quadrature="exact"`` the in-step integral of
    ``exp(iHs) dH exp(-iHs)`` is evaluated in closed form, so the result equals
    ``i U^dagger dU/dlambda`` of the discrete propagator; ``"midpoint"`` uses
    ``dt * U^dagger(t_k + dt/2) dH U(t_k + dt/2)``.  Both are second order.

    Raises
    ------
    UndersampledDriveError
        Fewer than ``min_steps_per_period`` steps per fastest drive period.
    """
    if quadrature not in ("exact", "midpoint"):
        raise ValidationError(f"unknown quadrature {quadrature!r}")
    if t_f < 0 or not math.isfinite(t_f):
        raise ValidationError(f"t_f must be finite and non-negative, got {t_f}")
    steps = int(steps)
    d = schedule.dim
    if t_f == 0:
        eye = np.eye(d, dtype=complex)
        zero = np.zeros((d, d), complex)
        return PropagationResult(np.zeros(1), eye, zero, 0, None, schedule.fingerprint,
                                 eye[None].copy() if store else None, zero[None].copy() if store else None,
                                 quadrature)
    if steps < 1:
        raise ValidationError("need at least one step")
    dt = t_f / steps
    per = _check_sampling(schedule, dt, allow_undersampled, min_steps_per_period)
    grid = np.linspace(0.0, t_f, steps + 1)
    kicks = _kick_indices(schedule, grid)

    U = np.eye(d, dtype=complex)
    G = np.zeros((d, d), complex)
    Us = np.empty((steps + 1, d, d), complex) if store else None
    Gs = np.empty((steps + 1, d, d), complex) if store else None
    if 0 in kicks:
        U = kicks[0] @ U
    if store:
        Us[0], Gs[0] = U, G
    chunk = max(1, min(steps, _CHUNK_ELEMENTS // (d * d)))
    for start in range(0, steps, chunk):
        stop = min(steps, start + chunk)
        mids = (np.arange(start, stop) + 0.5) * dt
        stepper, gamma = _step_blocks(schedule, mids, dt, quadrature)
        for j, k in enumerate(range(start, stop)):
            G = G + dagger(U) @ gamma[j] @ U
            U = stepper[j] @ U
            kick = kicks.get(k + 1)
            if kick is not None:
                U = kick @ U
            if store:
                Us[k + 1], Gs[k + 1] = U, G
    G = hermitize(G)
    if store:
        Gs = hermitize(Gs)
    return PropagationResult(grid, U, G, steps, per, schedule.fingerprint, Us, Gs, quadrature)


def _step_blocks(schedule, mids, dt, quadrature):
    """Step propagators and in-step generator increments for a batch of midpoints."""
    H = hermitize(schedule.hamiltonian_dense(mids))
    D = schedule.dlam_dense(mids)
    E, V = np.linalg.eigh(H)
    Vd = dagger(V)
    stepper = (V * np.exp(-1j * E * dt)[:, None, :]) @ Vd
    Dp = Vd @ D @ V
    diff = E[:, :, None] - E[:, None, :]
    if quadrature == "exact":
        weights = phi_integral(diff, dt)
    else:
        weights = dt * np.exp(1j * diff * dt / 2)
    gamma = V @ (Dp * weights) @ Vd
    return stepper, gamma


def _kick_indices(schedule, grid) -> dict:
    out = {}
    if not schedule.kicks:
        return out
    dt = grid[1] - grid[0] if grid.size > 1 else 1.0
    for t, A in schedule.kicks:
        k = int(round(t / dt))
        if k < 0 or k >= grid.size or abs(grid[k] - t) > 1e-9 * max(1.0, abs(t)):
            if t > grid[-1] + 1e-12:
                continue
            raise ValidationError(f"kick at t={t} is not on the propagation grid")
        K = expm_hermitian(A)
        out[k] = K @ out[k] if k in out else K
    return out


def evolve_periodic(schedule: HamiltonianSchedule, t_f: float, steps_per_period: int | None = None, *,
                    min_steps_per_period: int = MIN_STEPS_PER_PERIOD,
                    allow_undersampled: bool = False) -> PropagationResult:
    """Propagate a drive-periodic schedule by repeating one period.

    One period is integrated on ``steps_per_period`` steps (default
    ``40 * l_max``).  ``m`` repetitions are summed in closed form in the
    eigenbasis of the Floquet operator ``F``; the leftover time uses steps of
    the same length.  Equivalent to :func:`propagate` on the same step grid.
    """
    if not schedule.is_periodic:
        raise ValidationError("evolve_periodic needs a schedule whose only time dependence is the drive")
    T = schedule.drive.period
    if steps_per_period is None:
        steps_per_period = MIN_STEPS_PER_PERIOD * schedule.drive.l_max
    steps_per_period = int(steps_per_period)
    d = schedule.dim
    if t_f <= 0:
        return propagate(schedule, 0.0, 1, store=False)
    m = int(math.floor(t_f / T + 1e-9))
    rem = t_f - m * T
    if abs(rem) < 1e-12 * max(1.0, t_f):
        rem = 0.0
    dt = T / steps_per_period
    per = _check_sampling(schedule, dt, allow_undersampled, min_steps_per_period)
    if m == 0:
        F, GT = np.eye(d, dtype=complex), np.zeros((d, d), complex)
    else:
        one = propagate(schedule, T, steps_per_period, store=False, min_steps_per_period=min_steps_per_period,
                        allow_undersampled=allow_undersampled)
        F, GT = one.final, one.generator_final
    Fm, Gm = _repeat_period(F, GT, m)
    steps = m * steps_per_period
    if rem > 0:
        n_rem = max(1, int(math.ceil(rem / dt - 1e-9)))
        tail = propagate(schedule, rem, n_rem, store=False, min_steps_per_period=min_steps_per_period,
                         allow_undersampled=True)
        U = tail.final @ Fm
        G = Gm + dagger(Fm) @ tail.generator_final @ Fm
        steps += n_rem
    else:
        U, G = Fm, Gm
    return PropagationResult(np.array([0.0, t_f]), U, hermitize(G), steps, per, schedule.fingerprint,
                             quadrature="exact", periods=m)


def _repeat_period(F, GT, m):
    """``F^m`` and ``sum_{j<m} (F^j)^dagger G_T F^j`` via the Schur form of the unitary ``F``."""
    d = F.shape[0]
    if m == 0:
        return np.eye(d, dtype=complex), np.zeros((d, d), complex)
    Tm, Z = scipy.linalg.schur(F, output="complex")
    lam = np.diag(Tm)
    lam = lam / np.abs(lam)
    Zd = dagger(Z)
    Gp = Zd @ GT @ Z
    theta = np.angle(np.conj(lam)[:, None] * lam[None, :])
    s_half = np.sin(theta / 2)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(s_half == 0, float(m), np.sin(m * theta / 2) / np.where(s_half == 0, 1.0, s_half))
    S = np.exp(1j * (m - 1) * theta / 2) * ratio
    Gm = Z @ (Gp * S) @ Zd
    Fm = (Z * lam ** m) @ Zd
    return Fm, hermitize(Gm)


# generator and QFI -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GeneratorSpectrum:
    """Eigen-decomposed generator.

    ``max_qfi`` is ``(mu_plus - mu_minus)^2 / 4`` times the convention factor.
    """

    G: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    qfi_convention: str = "var"
    t_f: float = 0.0

    @classmethod
    def from_matrix(cls, G: np.ndarray, convention: str = "var", t_f: float = 0.0) -> "GeneratorSpectrum":
        convention_factor(convention)
        G = hermitize(np.asarray(G, dtype=complex))
        w, v = np.linalg.eigh(G)
        return cls(G, w, v, convention, t_f)

    @property
    def dim(self) -> int:
        return self.G.shape[0]

    @property
    def mu_plus(self) -> float:
        return float(self.eigenvalues[-1])

    @property
    def mu_minus(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def phi_plus(self) -> np.ndarray:
        return self.eigenvectors[:, -1]

    @property
    def phi_minus(self) -> np.ndarray:
        return self.eigenvectors[:, 0]

    @property
    def optimal_state(self) -> np.ndarray:
        return (self.phi_plus + self.phi_minus) / math.sqrt(2)

    @property
    def spread(self) -> float:
        return self.mu_plus - self.mu_minus

    @property
    def max_qfi(self) -> float:
        return convention_factor(self.qfi_convention) * self.spread ** 2 / 4

    @property
    def is_degenerate(self) -> bool:
        scale = max(abs(self.mu_plus), abs(self.mu_minus))
        return scale == 0 or self.spread <= DEGENERACY_RTOL * scale

    def delta_rho(self) -> np.ndarray:
        """``|phi_+><phi_+| - |phi_-><phi_-|``."""
        p, q = self.phi_plus, self.phi_minus
        return np.outer(p, p.conj()) - np.outer(q, q.conj())


def generator(result: PropagationResult, schedule: HamiltonianSchedule,
              convention: str = "var") -> GeneratorSpectrum:
    """Spectrum of the generator accumulated by :func:`propagate` or :func:`evolve_periodic`."""
    if result.fingerprint != schedule.fingerprint:
        raise ValidationError("propagation result was produced from a different schedule")
    if result.final.shape[0] != schedule.dim:
        raise ValidationError("grid and schedule dimensions differ")
    return GeneratorSpectrum.from_matrix(result.generator_final, convention, result.t_f)


def default_dlam(lam: float) -> float:
    return 1e-5 * max(1.0, abs(lam))


def generator_by_derivative(schedule: HamiltonianSchedule, t_f: float, steps: int | None = None,
                            dlam: float | None = None, *, periodic: bool = False,
                            steps_per_period: int | None = None, **kwargs) -> np.ndarray:
    """``i U^dagger(t_f) [U(lam + d/2) - U(lam - d/2)] / d``, Hermitized.

    A cross-check oracle for :func:`generator`; ``periodic=True`` uses
    :func:`evolve_periodic` for each propagation.
    """
    if dlam is None:
        dlam = default_dlam(schedule.lam)
    if not dlam > 0:
        raise ValidationError("dlam must be positive")

    def final(s):
        if periodic:
            return evolve_periodic(s, t_f, steps_per_period, **kwargs).final
        return propagate(s, t_f, steps, store=False, **kwargs).final

    U0 = final(schedule)
    Up = final(schedule.with_lambda(schedule.lam + dlam / 2))
    Um = final(schedule.with_lambda(schedule.lam - dlam / 2))
    return hermitize(1j * dagger(U0) @ (Up - Um) / dlam)


def qfi(G: GeneratorSpectrum, state: np.ndarray) -> float:
    """``Var(G)`` in the state (times 4 under ``four_var``)."""
    psi = np.asarray(state, dtype=complex).reshape(-1)
    if psi.size != G.dim:
        raise ValidationError(f"state dimension {psi.size} does not match generator dimension {G.dim}")
    norm = np.linalg.norm(psi)
    if abs(norm - 1.0) > NORM_TOL:
        raise ValidationError(f"state norm {norm:.12g} deviates from 1")
    Gpsi = G.G @ psi
    mean = np.vdot(psi, Gpsi).real
    second = np.vdot(Gpsi, Gpsi).real
    return convention_factor(G.qfi_convention) * max(second - mean * mean, 0.0)


def optimal_initial_state(G: GeneratorSpectrum) -> tuple[np.ndarray, float]:
    """Equal superposition of the extremal eigenvectors and the maximal QFI."""
    if G.is_degenerate:
        raise DegenerateGeneratorError(
            f"extremal eigenvalues coincide (mu+ = {G.mu_plus:.6g}, mu- = {G.mu_minus:.6g})")
    return G.optimal_state, G.max_qfi


def qfi_ratio(value: float, bound: float) -> float:
    """Normalized QFI; zero when the bound vanishes (e.g. ``t_f = 0``)."""
    return 0.0 if bound <= 0 else value / bound


def product_state(n_sites: int, single: Sequence[complex]) -> np.ndarray:
    """``single`` tensored over ``n_sites`` sites, normalized."""
    s = np.asarray(single, dtype=complex)
    s = s / np.linalg.norm(s)
    out = np.ones(1, complex)
    for _ in range(n_sites):
        out = np.kron(out, s)
    return out


def ghz_state(n_sites: int) -> np.ndarray:
    out = np.zeros(2 ** n_sites, complex)
    out[0] = out[-1] = 1 / math.sqrt(2)
    return out
