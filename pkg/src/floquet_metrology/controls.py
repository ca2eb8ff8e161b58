"""Optimal control for parameter estimation.

Three tools live here: the unrestricted adiabatic-following control, the
adjoint operator ``Lambda(t) = -i U(t) [drho, G_t] U^dagger(t)`` whose traces
against the control basis are the first-order optimality residuals, and a
gradient-ascent optimizer over restricted coefficient trajectories.
"""
from __future__ import annotations

import dataclasses
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg
from scipy.optimize import linear_sum_assignment

from ._linalg import dagger, hermitize, max_abs
from .dynamics import (ControlTable, GeneratorSpectrum, HamiltonianSchedule,
                       PropagationResult, convention_factor, generator,
                       propagate)
from .errors import (DegenerateGeneratorError, NonFiniteGradientError,
                     StepSizeError, ValidationError)
from .pauli import (BoundaryCondition, PauliOperator, chain_sum, commutator,
                    pauli_basis, pauli_decompose, to_dense)

log = logging.getLogger(__name__)

EIG_CLUSTER_TOL = 1e-9


# basis ------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ControlBasis:
    """Hermitian traceless control operators ``X_i`` with display labels."""

    elements: tuple
    labels: tuple = ()

    def __post_init__(self):
        els = tuple(self.elements)
        if not els:
            raise ValidationError("control basis is empty")
        n = {op.n_sites for op in els}
        if len(n) != 1:
            raise ValidationError("control basis elements act on different site counts")
        for op in els:
            if not op.is_hermitian(1e-12):
                raise ValidationError(f"control element {op!r} is not Hermitian")
            if not op.is_traceless():
                raise ValidationError(f"control element {op!r} has a trace")
        labels = tuple(self.labels) or tuple(_label(op) for op in els)
        if len(labels) != len(els):
            raise ValidationError("one label per element required")
        object.__setattr__(self, "elements", els)
        object.__setattr__(self, "labels", labels)
        if np.linalg.matrix_rank(self.gram()) < len(els):
            raise ValidationError("control basis is linearly dependent")

    def __len__(self):
        return len(self.elements)

    @property
    def n_sites(self) -> int:
        return self.elements[0].n_sites

    def gram(self) -> np.ndarray:
        """Hilbert-Schmidt Gram matrix normalized by the dimension (Pauli coefficient overlaps)."""
        m = len(self.elements)
        g = np.zeros((m, m))
        for a, b in itertools.product(range(m), repeat=2):
            g[a, b] = sum((ca.conjugate() * self.elements[b].coefficient(k)).real
                          for k, ca in self.elements[a].items())
        return g

    def condition_number(self) -> float:
        return float(np.linalg.cond(self.gram()))

    @classmethod
    def from_labels(cls, labels: Sequence[str], n_sites: int) -> "ControlBasis":
        return cls(tuple(PauliOperator.from_label(lab, n_sites) for lab in labels), tuple(labels))

    @classmethod
    def full(cls, n_sites: int) -> "ControlBasis":
        """Every non-identity Pauli string."""
        return cls(tuple(pauli_basis(n_sites)))

    @classmethod
    def local_chain(cls, n_sites: int, bc=BoundaryCondition.PERIODIC, two_body: Sequence[str] | None = None) -> "ControlBasis":
        """All single-site Paulis plus nearest-neighbour pairs (default all nine letter pairs)."""
        bc = BoundaryCondition.parse(bc)
        els = [PauliOperator.from_label(f"{a}{i}", n_sites) for i in range(n_sites) for a in "XYZ"]
        pairs = two_body if two_body is not None else [a + b for a in "XYZ" for b in "XYZ"]
        last = n_sites if bc is BoundaryCondition.PERIODIC and n_sites > 2 else n_sites - 1
        for i in range(last):
            j = (i + 1) % n_sites
            for p in pairs:
                els.append(PauliOperator(n_sites, {((i, p[0]), (j, p[1])): 1.0}))
        return cls(tuple(els))

    def matrices(self) -> np.ndarray:
        return np.array([to_dense(op) for op in self.elements])


def _label(op: PauliOperator) -> str:
    if len(op) == 1:
        (key, c), = op.items()
        s = op.terms[0].label()
        return s if c == 1 else f"{c.real:g}*{s}"
    return repr(op)


# Pang-Jordan --------------------------------------------------------------------

@dataclass(frozen=True)
class DeltaPulse:
    """Impulsive relabeling at an eigenvalue crossing; applied as ``exp(-i generator)``."""

    time: float
    generator: np.ndarray
    strength: float
    permutation: tuple

    def as_record(self) -> dict:
        return {"time": self.time, "strength": self.strength, "permutation": list(self.permutation),
                "generator_pauli": _pauli_record(self.generator)}


def _pauli_record(mat: np.ndarray) -> dict:
    op = pauli_decompose(mat, tol=1e-12)
    return {s.label() or "I": [c.real, c.imag] for s, c in zip(op.terms, (t.coefficient for t in op.terms))}


@dataclass
class PangJordanControl:
    time_grid: np.ndarray
    controls: np.ndarray
    """Dense ``H_c(t_k)``, shape ``(K+1, dim, dim)``."""
    events: list
    branch_values: np.ndarray
    """Eigenvalues of ``dH/dlambda`` along tracked branches, shape ``(K+1, dim)``."""

    def spread_integral(self) -> float:
        """``int (max - min eigenvalue)`` by the trapezoid rule; what the protocol attains."""
        s = self.branch_values.max(axis=1) - self.branch_values.min(axis=1)
        return float(np.trapezoid(s, self.time_grid)) if self.time_grid.size > 1 else 0.0

    def pauli_table(self, n_sites: int) -> tuple[list, np.ndarray]:
        basis = pauli_basis(n_sites)
        mats = np.array([to_dense(b) for b in basis])
        d = mats.shape[-1]
        coeffs = np.einsum("iab,kba->ik", mats, self.controls).real / d
        return basis, coeffs

    def to_schedule(self, schedule: HamiltonianSchedule) -> HamiltonianSchedule:
        """Attach the control as a full-basis table plus kicks at the crossing times."""
        basis, coeffs = self.pauli_table(schedule.n_sites)
        table = ControlTable(tuple(basis), coeffs, float(self.time_grid[-1]))
        kicks = tuple(schedule.kicks) + tuple((e.time, e.generator) for e in self.events)
        return dataclasses.replace(schedule, controls=table, kicks=kicks)


def minimal_static_control(H_lambda: PauliOperator, dlam_H: PauliOperator) -> PauliOperator:
    """Minus the Pauli terms of ``H_lambda`` that fail to commute with ``dlam_H``."""
    out = {}
    for key, c in H_lambda.items():
        if commutator(PauliOperator(H_lambda.n_sites, {key: 1.0}), dlam_H):
            out[key] = -c
    return PauliOperator(H_lambda.n_sites, out)


def pang_jordan_control(schedule: HamiltonianSchedule, t_f: float, steps: int,
                        *, cluster_tol: float = EIG_CLUSTER_TOL) -> PangJordanControl:
    """Unrestricted optimal control keeping the probe on the eigenvectors of ``dH/dlambda``.

    ``H_c = i sum_a |phi_a'><phi_a| - N(t)`` where ``N`` collects the Pauli terms of the
    uncontrolled Hamiltonian that fail to commute with ``dH/dlambda(t)``.  The
    eigenvectors are gauge fixed (largest component real positive) and matched
    between grid points by overlap; degenerate clusters are aligned by a polar
    rotation.  When tracked branches change their eigenvalue order a
    :class:`DeltaPulse` relabels them so the top branch stays maximal.
    """
    if schedule.controls is not None:
        raise ValidationError("pang_jordan_control expects an uncontrolled schedule")
    steps = int(steps)
    if steps < 2:
        raise ValidationError("need at least two steps")
    grid = np.linspace(0.0, t_f, steps + 1)
    D = hermitize(schedule.dlam_dense(grid))
    d = schedule.dim
    V = np.empty((steps + 1, d, d), complex)
    h = np.empty((steps + 1, d))
    w, v = np.linalg.eigh(D[0])
    V[0], h[0] = _gauge(v), w
    scale = max(1.0, max_abs(D))
    for k in range(1, steps + 1):
        w, v = np.linalg.eigh(D[k])
        v = _gauge(v)
        V[k], h[k] = _align(V[k - 1], w, v, cluster_tol * scale)
    Vdot = np.gradient(V, grid, axis=0, edge_order=2)
    Hcd = hermitize(1j * Vdot @ dagger(V))

    # relabel when the rank order of the tracked branches changes
    events = []
    order = list(np.argsort(h[0], kind="stable"))
    for k in range(1, steps + 1):
        new = _reorder(order, h[k], cluster_tol * scale)
        if new != order:
            W = np.zeros((d, d), complex)
            for old_b, new_b in zip(order, new):
                W += np.outer(V[k][:, new_b], V[k][:, old_b].conj())
            A = _unitary_generator(W)
            perm = tuple(int(new.index(b)) for b in order)
            events.append(DeltaPulse(float(grid[k]), A, float(np.linalg.norm(A, 2)), perm))
            order = new

    Hc = np.empty_like(Hcd)
    cache = {}
    for k, t in enumerate(grid):
        H0 = schedule.evaluate(float(t))
        key = (H0, schedule.dlam(float(t)))
        if key not in cache:
            cache[key] = to_dense(minimal_static_control(*key))
        Hc[k] = Hcd[k] + cache[key]
    return PangJordanControl(grid, Hc, events, h)


def _gauge(v: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(v), axis=0)
    ph = v[idx, np.arange(v.shape[1])]
    return v * (np.abs(ph) / ph)[None, :]


def _clusters(w: np.ndarray, tol: float) -> list[list[int]]:
    groups = [[0]]
    for i in range(1, w.size):
        if w[i] - w[groups[-1][-1]] <= tol:
            groups[-1].append(i)
        else:
            groups.append([i])
    return groups


def _align(prev: np.ndarray, w: np.ndarray, v: np.ndarray, tol: float):
    """Reorder and rotate the eigenvectors ``v`` to follow the columns of ``prev``.

    Columns are assigned to eigenvalue clusters by projected overlap; inside each
    cluster a polar rotation picks the vectors closest to the previous ones, which
    also carries the phase forward.
    """
    d = w.size
    groups = _clusters(w, tol)
    slots, weight = [], np.empty((d, d))
    for gi, g in enumerate(groups):
        proj = np.sum(np.abs(dagger(v[:, g]) @ prev) ** 2, axis=0)
        for _ in g:
            weight[:, len(slots)] = proj
            slots.append(gi)
    rows, cols = linear_sum_assignment(-weight)
    owner = {gi: [] for gi in range(len(groups))}
    for r, col in zip(rows, cols):
        owner[slots[col]].append(int(r))
    out_v = np.empty_like(v)
    out_w = np.empty_like(w)
    for gi, g in enumerate(groups):
        targets = sorted(owner[gi])
        block = v[:, g]
        u, _, vh = np.linalg.svd(dagger(block) @ prev[:, targets])
        out_v[:, targets] = block @ (u @ vh)
        out_w[targets] = w[g]
    return out_v, out_w


def _reorder(order: list, values: np.ndarray, tol: float) -> list:
    """Insertion sort of branch labels by value, swapping only beyond ``tol``."""
    new = list(order)
    for i in range(1, len(new)):
        j = i
        while j > 0 and values[new[j - 1]] > values[new[j]] + tol:
            new[j - 1], new[j] = new[j], new[j - 1]
            j -= 1
    return new


def _unitary_generator(W: np.ndarray) -> np.ndarray:
    """Hermitian ``A`` with ``exp(-i A) = W`` and eigenvalues in ``(-pi, pi]``."""
    T, Z = scipy.linalg.schur(W, output="complex")
    lam = np.diag(T)
    return hermitize((Z * (-np.angle(lam))) @ dagger(Z))


# adjoint and residuals --------------------------------------------------------------

@dataclass
class AdjointTrajectory:
    time_grid: np.ndarray
    Lambda: np.ndarray
    delta_rho: np.ndarray

    def norms(self) -> np.ndarray:
        return np.array([np.linalg.norm(L, 2) for L in self.Lambda]) if self.Lambda.size else np.zeros(0)


@dataclass
class ControlProblem:
    """Restricted control problem ``H = H_0(t) + sum_i c_i(t) X_i`` on a uniform grid.

    ``coefficients`` has shape ``(d_c, steps + 1)`` and shares the propagation grid.
    ``initial_state`` is ``"generator_optimal"`` or a fixed state vector.
    """

    schedule: HamiltonianSchedule
    basis: ControlBasis
    coefficients: np.ndarray
    t_f: float
    initial_state: object = "generator_optimal"
    convention: str = "var"
    allow_undersampled: bool = False

    def __post_init__(self):
        c = np.array(self.coefficients, dtype=float)
        if c.ndim != 2 or c.shape[0] != len(self.basis) or c.shape[1] < 2:
            raise ValidationError(f"coefficient table shape {c.shape} should be ({len(self.basis)}, K+1)")
        if not np.all(np.isfinite(c)):
            raise ValidationError("initial coefficients must be finite")
        if self.basis.n_sites != self.schedule.n_sites:
            raise ValidationError("basis and schedule site counts differ")
        if self.schedule.controls is not None:
            raise ValidationError("the base schedule must not carry its own control table")
        if not self.t_f > 0:
            raise ValidationError("t_f must be positive")
        convention_factor(self.convention)
        if not isinstance(self.initial_state, str):
            psi = np.asarray(self.initial_state, dtype=complex).reshape(-1)
            if psi.size != self.schedule.dim or abs(np.linalg.norm(psi) - 1) > 1e-8:
                raise ValidationError("fixed initial state must be a unit vector of the right dimension")
            self.initial_state = psi
        elif self.initial_state != "generator_optimal":
            raise ValidationError(f"unknown initial-state policy {self.initial_state!r}")
        self.coefficients = c

    @property
    def steps(self) -> int:
        return self.coefficients.shape[1] - 1

    @classmethod
    def zeros(cls, schedule, basis, t_f, steps, **kw) -> "ControlProblem":
        return cls(schedule, basis, np.zeros((len(basis), int(steps) + 1)), t_f, **kw)

    @classmethod
    def random(cls, schedule, basis, t_f, steps, scale=0.1, seed=0, **kw) -> "ControlProblem":
        rng = np.random.default_rng(seed)
        return cls(schedule, basis, scale * rng.uniform(-1, 1, (len(basis), int(steps) + 1)), t_f, **kw)

    def with_coefficients(self, c: np.ndarray) -> "ControlProblem":
        return dataclasses.replace(self, coefficients=np.asarray(c, dtype=float))

    def controlled_schedule(self, c: np.ndarray | None = None) -> HamiltonianSchedule:
        c = self.coefficients if c is None else c
        return self.schedule.with_controls(ControlTable(self.basis.elements, c, self.t_f))

    def propagate(self, c=None, store=True) -> tuple[HamiltonianSchedule, PropagationResult]:
        s = self.controlled_schedule(c)
        return s, propagate(s, self.t_f, self.steps, store=store, allow_undersampled=self.allow_undersampled)

    def qfi_of(self, spec: GeneratorSpectrum) -> float:
        if isinstance(self.initial_state, str):
            return spec.max_qfi
        from .dynamics import qfi
        return qfi(spec, self.initial_state)

    def evaluate(self, c=None) -> float:
        s, r = self.propagate(c, store=False)
        return self.qfi_of(generator(r, s, self.convention))

    def weight(self, spec: GeneratorSpectrum, delta_rho: np.ndarray | None = None) -> np.ndarray:
        """``W`` with ``dQFI = Tr(W dG)`` to first order."""
        f = convention_factor(self.convention)
        if isinstance(self.initial_state, str):
            dr = spec.delta_rho() if delta_rho is None else delta_rho
            return f * spec.spread / 2 * dr
        psi = self.initial_state
        rho = np.outer(psi, psi.conj())
        mean = np.vdot(psi, spec.G @ psi).real
        return f * (spec.G @ rho + rho @ spec.G - 2 * mean * rho)


def adjoint_trajectory(result: PropagationResult, spec: GeneratorSpectrum,
                       delta_rho: np.ndarray | None = None) -> AdjointTrajectory:
    """``Lambda(t_k) = -i U(t_k) [drho, G_{t_k}] U^dagger(t_k)`` from stored partial generators.

    ``drho`` defaults to the projector difference of the extremal eigenvectors of ``G``.
    """
    if result.unitaries is None or result.partial_generators is None:
        raise ValidationError("adjoint_trajectory needs a propagation stored at every grid point")
    if delta_rho is None:
        if spec.is_degenerate:
            raise DegenerateGeneratorError("extremal eigenvalues of G coincide; drho is undefined")
        delta_rho = spec.delta_rho()
    U, Gs = result.unitaries, result.partial_generators
    comm = delta_rho[None] @ Gs - Gs @ delta_rho[None]
    Lam = hermitize(-1j * U @ comm @ dagger(U))
    return AdjointTrajectory(result.time_grid, Lam, delta_rho)


@dataclass
class ResidualTable:
    values: np.ndarray
    """``r_i(t_k) = Tr(Lambda(t_k) X_i)``, shape ``(d_c, K+1)``."""

    @property
    def summary(self) -> float:
        return max_abs(self.values)


def optimality_residual(basis: ControlBasis | Sequence, adjoint: AdjointTrajectory) -> ResidualTable:
    mats = basis.matrices() if isinstance(basis, ControlBasis) else np.array([to_dense(b) for b in basis])
    r = np.einsum("kab,iba->ik", adjoint.Lambda, mats).real if adjoint.Lambda.size else np.zeros((len(mats), 0))
    return ResidualTable(r)


# gradient -----------------------------------------------------------------------

def _block_generators(schedule: HamiltonianSchedule, t_f: float, steps: int):
    dt = t_f / steps
    mids = (np.arange(steps) + 0.5) * dt
    H = hermitize(schedule.hamiltonian_dense(mids))
    D = schedule.dlam_dense(mids)
    d = H.shape[-1]
    A = np.zeros((steps, 2 * d, 2 * d), complex)
    A[:, :d, :d] = H
    A[:, d:, d:] = H
    A[:, :d, d:] = D
    return -1j * dt * A, dt


def qfi_gradient(problem: ControlProblem, c: np.ndarray | None = None,
                 delta_rho: np.ndarray | None = None) -> tuple[np.ndarray, float, GeneratorSpectrum]:
    """Exact gradient of the discrete QFI with respect to the coefficient table.

    Each step is the exponential of the block matrix ``-i dt [[H, dH], [0, H]]``,
    whose product over steps carries ``U`` and ``dU/dlambda``.  The sensitivity of
    every step follows from the Frechet derivative of the matrix exponential, and
    midpoint interpolation maps step sensitivities to grid coefficients.

    Returns the gradient (shape of the table), the QFI and the generator spectrum.
    """
    c = problem.coefficients if c is None else np.asarray(c, float)
    s = problem.controlled_schedule(c)
    K = problem.steps
    Ahat, dt = _block_generators(s, problem.t_f, K)
    d = s.dim
    M = scipy.linalg.expm(Ahat) if K else Ahat
    before = np.empty((K + 1, 2 * d, 2 * d), complex)  # before[k] = M_{k-1} ... M_0
    before[0] = np.eye(2 * d)
    for k in range(K):
        before[k + 1] = M[k] @ before[k]
    after = np.empty((K + 1, 2 * d, 2 * d), complex)  # after[k] = M_{K-1} ... M_k
    after[K] = np.eye(2 * d)
    for k in range(K - 1, -1, -1):
        after[k] = after[k + 1] @ M[k]
    P = before[K]
    if not (np.all(np.isfinite(Ahat)) and np.all(np.isfinite(P))):
        raise NonFiniteGradientError("non-finite propagator", dump={"coefficients": c})
    U, B = P[:d, :d], P[:d, d:]
    spec = GeneratorSpectrum.from_matrix(1j * dagger(U) @ B, problem.convention, problem.t_f)
    value = problem.qfi_of(spec)
    W = problem.weight(spec, delta_rho)
    C = np.zeros((2 * d, 2 * d), complex)
    C[:d, :d] = -1j * W @ dagger(B)
    C[d:, :d] = 1j * W @ dagger(U)
    X = s.control_matrices()
    g_steps = np.empty((len(X), K))
    for k in range(K):
        Ck = before[k] @ C @ after[k + 1]
        N = scipy.linalg.expm_frechet(Ahat[k], Ck, compute_expm=False)
        T = N[:d, :d] + N[d:, d:]
        g_steps[:, k] = dt * np.real(-1j * np.einsum("ab,iba->i", T, X))
    grad = np.zeros_like(c)
    grad[:, :-1] += 0.5 * g_steps
    grad[:, 1:] += 0.5 * g_steps
    if not np.all(np.isfinite(grad)):
        raise NonFiniteGradientError("non-finite gradient", dump={"coefficients": c, "qfi": value})
    return grad, value, spec


def gradient_check(problem: ControlProblem, eps: float = 1e-6, samples: int = 20, seed: int = 0) -> float:
    """Worst deviation between the adjoint gradient and central differences on sampled entries.

    The deviation is ``max |g_adj - g_fd| / max(max |g_fd|, floor)`` with
    ``floor = 1e-6 * max(1, QFI)``, below which central differences are
    round-off; a zero-sensitivity direction therefore reports about zero.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ValidationError("perturbation must lie in [1e-7, 1e-3]")
    grad, value, _ = qfi_gradient(problem)
    rng = np.random.default_rng(seed)
    m, k = problem.coefficients.shape
    total = m * k
    flat = rng.choice(total, size=min(samples, total), replace=False)
    fd, ad = [], []
    for idx in flat:
        i, j = divmod(int(idx), k)
        cp = problem.coefficients.copy()
        cm = problem.coefficients.copy()
        cp[i, j] += eps
        cm[i, j] -= eps
        fd.append((problem.evaluate(cp) - problem.evaluate(cm)) / (2 * eps))
        ad.append(grad[i, j])
    fd, ad = np.array(fd), np.array(ad)
    scale = max_abs(fd)
    err = max_abs(ad - fd)
    if scale == 0 and err == 0:
        return 0.0
    return err / max(scale, 1e-6 * max(1.0, abs(value)))


# optimizer ------------------------------------------------------------------------

@dataclass
class OptimizationResult:
    problem: ControlProblem
    qfi: float
    history: list
    iterations: int
    converged: bool
    gradient_norm: float
    message: str = ""

    @property
    def coefficients(self) -> np.ndarray:
        return self.problem.coefficients


def variational_optimize(problem: ControlProblem, iterations: int = 100, step: float = 0.5, *,
                         tol: float = 1e-6, max_halvings: int = 30, monotone_tol: float = 1e-9,
                         bound: float | None = None, method: str = "gradient") -> OptimizationResult:
    """Gradient ascent of the QFI over the coefficient table.

    Each iteration propagates, rebuilds ``G`` and ``drho`` from the current extremal
    eigenvectors, and moves along the gradient scaled so its largest entry equals
    the trial step.  Steps are halved until the QFI does not drop (up to
    ``max_halvings`` times) and doubled after each success.  If the extremal
    eigenvectors swap between iterations the previous ``drho`` is kept for one more
    iteration.  ``bound`` clips coefficients to ``[-bound, bound]``.

    Stops when the largest gradient entry or the relative QFI gain falls below ``tol``.
    ``method="lbfgs"`` swaps the ascent for scipy's bounded L-BFGS on the same
    gradient, which converges much faster on smooth problems.
    """
    if len(problem.basis) < 1:
        raise ValidationError("need at least one control")
    if method == "lbfgs":
        return _optimize_lbfgs(problem, iterations, tol, bound)
    if method != "gradient":
        raise ValidationError(f"unknown optimizer method {method!r}")
    c = problem.coefficients.copy()
    grad, value, spec = qfi_gradient(problem, c)
    history = [value]
    prev_spec, frozen = spec, False
    eta = step
    converged = False
    message = "iteration limit"
    gnorm = max_abs(grad)
    it = 0
    for it in range(1, iterations + 1):
        gnorm = max_abs(grad)
        if gnorm <= tol:
            converged, message = True, "gradient below tolerance"
            it -= 1
            break
        direction = grad / gnorm
        accepted = False
        trial = eta
        for _ in range(max_halvings + 1):
            cand = c + trial * direction
            if bound is not None:
                cand = np.clip(cand, -bound, bound)
            new_value = problem.evaluate(cand)
            if not math.isfinite(new_value):
                raise NonFiniteGradientError("QFI became non-finite", dump={"iteration": it, "coefficients": cand})
            if new_value >= value - monotone_tol:
                accepted = True
                break
            trial /= 2
        if not accepted:
            gain = trial * float(np.sum(grad * direction))
            if gain <= tol * max(1.0, abs(value)):
                converged, message = True, "line search exhausted at a stationary point"
                it -= 1
                break
            raise StepSizeError(f"QFI decreased after {max_halvings} halvings at iteration {it}")
        c = cand
        gain = new_value - value
        eta = min(2 * trial, 1e3)
        grad, value, spec = qfi_gradient(problem, c)
        if isinstance(problem.initial_state, str):
            swapped = (abs(np.vdot(spec.phi_plus, prev_spec.phi_minus))
                       > abs(np.vdot(spec.phi_plus, prev_spec.phi_plus)))
            if swapped and not frozen:
                # keep the previous drho for one iteration
                grad, _, _ = qfi_gradient(problem, c, delta_rho=prev_spec.delta_rho())
                frozen = True
            else:
                frozen = False
        prev_spec = spec
        history.append(value)
        log.debug("iteration %d qfi %.12g step %.3g", it, value, trial)
        if gain <= tol * max(1.0, abs(value)) and trial <= tol:
            converged, message = True, "QFI gain below tolerance"
            break
    return OptimizationResult(problem.with_coefficients(c), value, history, it, converged, max_abs(grad), message)


def _optimize_lbfgs(problem: ControlProblem, iterations: int, tol: float, bound) -> OptimizationResult:
    from scipy.optimize import minimize

    shape = problem.coefficients.shape
    cache = {}

    def fun(x):
        grad, value, _ = qfi_gradient(problem, x.reshape(shape))
        cache[x.tobytes()] = value
        return -value, -grad.ravel()

    x0 = problem.coefficients.ravel()
    history = [problem.evaluate()]
    if iterations <= 0:
        return OptimizationResult(problem, history[0], history, 0, False, float("nan"), "no iterations")

    def record(xk):
        value = cache.get(xk.tobytes())
        history.append(problem.evaluate(xk.reshape(shape)) if value is None else value)

    bounds = None if bound is None else [(-bound, bound)] * x0.size
    res = minimize(fun, x0, jac=True, method="L-BFGS-B", bounds=bounds, callback=record,
                   options={"maxiter": iterations, "gtol": tol, "ftol": 1e-15})
    c = res.x.reshape(shape)
    grad, value, _ = qfi_gradient(problem, c)
    if not np.all(np.isfinite(c)):
        raise NonFiniteGradientError("optimizer produced non-finite coefficients", dump={"result": res})
    return OptimizationResult(problem.with_coefficients(c), value, history, int(res.nit),
                              bool(res.success), max_abs(grad), str(res.message))
