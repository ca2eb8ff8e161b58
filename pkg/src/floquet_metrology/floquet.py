"""High-frequency drives and their first-order effective Hamiltonians.

A drive is stored through its Fourier components ``H_l`` (``l != 0``) so that
``H_d(t) = sum_l H_l exp(i l omega t)``.  Hermiticity of the time-domain
signal requires ``H_{-l} = H_l^dagger``; missing negative harmonics are
synthesized from that rule.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Callable, Mapping, Sequence

import numpy as np

from ._linalg import hermitize, phi_integral
from .errors import InvalidFrequencyError, NoMatchingError, ValidationError
from .pauli import (BoundaryCondition, PauliOperator, chain_sum, commutator,
                    to_dense)


class FloquetValidityWarning(UserWarning):
    """The drive frequency is not the largest scale of the problem."""


VALIDITY_FACTOR = 10.0


@dataclass(frozen=True, eq=False)
class HarmonicDrive:
    omega: float
    components: Mapping[int, PauliOperator] = field(default_factory=dict)

    def __post_init__(self):
        if not self.omega > 0:
            raise InvalidFrequencyError(f"drive frequency must be positive, got {self.omega}")
        comps = {}
        for l, op in self.components.items():
            l = int(l)
            if l == 0:
                raise ValidationError("static part belongs in the schedule, not in the drive")
            comps[l] = op
        for l in list(comps):
            partner = comps.get(-l)
            if partner is None:
                comps[-l] = comps[l].adjoint()
            elif not partner.equals(comps[l].adjoint(), tol=1e-12):
                raise ValidationError(f"H_{{{-l}}} is not the adjoint of H_{{{l}}}")
        n = {op.n_sites for op in comps.values()}
        if len(n) > 1:
            raise ValidationError("drive components act on different site counts")
        object.__setattr__(self, "components", dict(sorted(comps.items())))

    @property
    def n_sites(self) -> int | None:
        return next(iter(self.components.values())).n_sites if self.components else None

    @property
    def harmonics(self) -> list[int]:
        """Positive harmonic indices present."""
        return [l for l in self.components if l > 0]

    @property
    def l_max(self) -> int:
        return max((abs(l) for l in self.components), default=0)

    @property
    def period(self) -> float:
        return 2 * math.pi / self.omega

    def evaluate(self, t: float) -> PauliOperator:
        if not self.components:
            raise ValidationError("empty drive has no site count")
        out = PauliOperator.zero(self.n_sites)
        for l, op in self.components.items():
            out = out + op * np.exp(1j * l * self.omega * t)
        return out.hermitian_part()

    @cached_property
    def _dense_components(self):
        return {l: to_dense(op) for l, op in self.components.items() if l > 0}

    def dense(self, t: float) -> np.ndarray:
        """Time-domain drive as a dense matrix, ``2 Re`` over positive harmonics."""
        acc = None
        for l, mat in self._dense_components.items():
            term = mat * np.exp(1j * l * self.omega * t)
            acc = term if acc is None else acc + term
        if acc is None:
            return 0.0
        return acc + acc.conj().T

    def max_amplitude(self) -> float:
        return max((abs(c) for op in self.components.values() for _, c in op.items()), default=0.0)

    def with_omega(self, omega: float) -> "HarmonicDrive":
        return HarmonicDrive(omega, {l: op for l, op in self.components.items() if l > 0})


@dataclass(frozen=True)
class EffectiveModel:
    H_F: PauliOperator
    correction: PauliOperator
    truncation_bound: float
    """Heuristic scale of the dropped second-order terms."""


def effective_hamiltonian(H_static: PauliOperator, drive: HarmonicDrive | None,
                          *, sign: int = 1) -> EffectiveModel:
    """First-order high-frequency expansion.

    ``H_F = H_static + (1/omega) sum_{l>=1} [H_l, H_{-l}] / l``.  The reported
    ``truncation_bound`` is the heuristic ``max_l ||[H_l, [H_l, H_static]]|| / omega^2``
    using the coefficient-sum norm; it is an order-of-magnitude estimate, not a
    rigorous bound.  ``sign`` exists for mutation testing only.
    """
    if drive is None or not drive.components:
        return EffectiveModel(H_static, PauliOperator.zero(H_static.n_sites), 0.0)
    if not drive.omega > 0:
        raise InvalidFrequencyError(f"invalid frequency {drive.omega}")
    check_validity(H_static, drive)
    corr = PauliOperator.zero(H_static.n_sites)
    nested = 0.0
    for l in drive.harmonics:
        Hl, Hml = drive.components[l], drive.components[-l]
        corr = corr + commutator(Hl, Hml) / l
        nested = max(nested, commutator(Hl, commutator(Hl, H_static)).norm_bound())
    corr = (sign * corr / drive.omega).hermitian_part()
    return EffectiveModel((H_static + corr).hermitian_part(), corr, nested / drive.omega ** 2)


def check_validity(H_static: PauliOperator, drive: HarmonicDrive, factor: float = VALIDITY_FACTOR) -> bool:
    """Warn when omega is not at least ``factor`` times every other scale."""
    static_scale = 2 * max((abs(c) for _, c in H_static.items()), default=0.0)
    scale = max(static_scale, drive.max_amplitude())
    if drive.omega < factor * scale:
        warnings.warn(f"omega={drive.omega:g} is below {factor:g} x the largest scale {scale:g}; "
                      "the first-order expansion may not apply", FloquetValidityWarning, stacklevel=3)
        return False
    return True


def kick_operator(drive: HarmonicDrive | None, t: float, dim: int | None = None) -> np.ndarray:
    """First-order kick operator with ``K(0) = 0``.

    ``K(t) = 1/(i omega) sum_{l != 0} H_l (exp(i l omega t) - 1) / l``.
    """
    if drive is None or not drive.components:
        if dim is None:
            raise ValidationError("zero drive needs an explicit dimension")
        return np.zeros((dim, dim), dtype=complex)
    acc = 0
    for l, mat in drive._dense_components.items():
        acc = acc + mat * ((np.exp(1j * l * drive.omega * t) - 1.0) / l)
    # the -l terms equal minus the adjoint of the +l terms
    acc = (acc - acc.conj().T) / (1j * drive.omega)
    return (acc + acc.conj().T) / 2


# matching conditions ---------------------------------------------------------

def _harmonic_sum(products: Sequence, exact: bool) -> float:
    if exact:
        total = sum((Fraction(p).limit_denominator(10 ** 12) / l for l, p in enumerate(products, start=1)),
                    Fraction(0))
        return float(total)
    return math.fsum(p / l for l, p in enumerate(products, start=1))


def afm_frequency_qubit(c_y: Sequence[complex], c_z: Sequence[complex], Delta: float,
                        *, exact: bool = False) -> float:
    """Frequency cancelling the transverse term of a driven qubit.

    ``omega = 8/Delta * sum_l Im(c^y_l conj(c^z_l)) / l`` with ``l = 1..L`` the list position.
    """
    if len(c_y) != len(c_z):
        raise ValidationError("coefficient families have different lengths")
    if Delta == 0:
        raise ValidationError("Delta must be non-zero")
    products = [(complex(a) * complex(b).conjugate()).imag for a, b in zip(c_y, c_z)]
    omega = 8.0 / Delta * _harmonic_sum(products, exact)
    if not omega > 0:
        raise NoMatchingError(f"coefficients give omega={omega:g}; no positive matching frequency")
    return omega


def afm_frequency_chain(c_xy: Sequence[float], c_zx_tilde: Sequence[float], Delta: float,
                        *, exact: bool = False) -> float:
    """``omega = 8/Delta * sum_l c^xy_l c~^zx_l / l`` for real coefficient families."""
    if len(c_xy) != len(c_zx_tilde):
        raise ValidationError("coefficient families have different lengths")
    if Delta == 0:
        raise ValidationError("Delta must be non-zero")
    products = [float(a) * float(b) for a, b in zip(c_xy, c_zx_tilde)]
    omega = 8.0 / Delta * _harmonic_sum(products, exact)
    if not omega > 0:
        raise NoMatchingError(f"coefficients give omega={omega:g}; no positive matching frequency")
    return omega


def afm_amplitude(omega: float, harmonics: Sequence[int], Delta: float) -> float:
    """Uniform real amplitude ``c`` (both families) meeting the matching condition at ``omega``."""
    s = math.fsum(1.0 / l for l in harmonics)
    value = omega * Delta / (8.0 * s)
    if not value > 0:
        raise NoMatchingError("matching needs omega * Delta > 0")
    return math.sqrt(value)


# concrete drives ----------------------------------------------------------------

def qubit_drive(c_y: Sequence[float], c_z_tilde: Sequence[float], omega: float) -> HarmonicDrive:
    """``2 sum_l [c^y_l cos(l w t) Y + c~^z_l sin(l w t) Z]`` on one qubit.

    Components are ``H_l = c^y_l Y - i c~^z_l Z``.
    """
    if len(c_y) != len(c_z_tilde) or not len(c_y):
        raise ValidationError("need L >= 1 coefficients in each family")
    Y = PauliOperator.from_label("Y0", 1)
    Z = PauliOperator.from_label("Z0", 1)
    comps = {}
    for l, (cy, cz) in enumerate(zip(c_y, c_z_tilde), start=1):
        op = cy * Y + (-1j * cz) * Z
        if op:
            comps[l] = op
    return HarmonicDrive(omega, comps)


def chain_drive(c_xy: Sequence[float], c_zx_tilde: Sequence[float], omega: float, n: int,
                bc=BoundaryCondition.PERIODIC) -> HarmonicDrive:
    """``2 sum_l sum_i [c^xy_l cos(l w t) X_i Y_{i+1} + c~^zx_l sin(l w t) Z_i X_{i+1}]``.

    Components are ``H_l = sum_i (c^xy_l X_i Y_{i+1} - i c~^zx_l Z_i X_{i+1})``.
    """
    bc = BoundaryCondition.parse(bc)
    if bc is not BoundaryCondition.PERIODIC:
        raise ValidationError("chain drive needs periodic boundaries (wrap terms are required)")
    if n < 3:
        raise ValidationError(f"chain drive needs n >= 3, got {n}")
    if len(c_xy) != len(c_zx_tilde) or not len(c_xy):
        raise ValidationError("need L >= 1 coefficients in each family")
    comps = {}
    for l, (a, b) in enumerate(zip(c_xy, c_zx_tilde), start=1):
        op = chain_sum("XY", n, a, bc) + chain_sum("ZX", n, -1j * b, bc)
        if op:
            comps[l] = op
    return HarmonicDrive(omega, comps)


def static_counter_control(H_lambda: PauliOperator, dlam_H: PauliOperator,
                           allowed: Callable | None = None) -> PauliOperator:
    """Static control cancelling every allowed term of ``H_lambda`` that fails to commute with ``dlam_H``.

    ``allowed`` filters Pauli strings (given as letter tuples); the default admits
    one- and two-body terms.
    """
    if allowed is None:
        allowed = lambda letters: len(letters) <= 2  # noqa: E731
    out = {}
    for letters, c in H_lambda.items():
        single = PauliOperator(H_lambda.n_sites, {letters: 1.0})
        if commutator(single, dlam_H) and allowed(letters):
            out[letters] = -c
    return PauliOperator(H_lambda.n_sites, out)


def effective_generator(H_F, dlam_H, t_f: float) -> np.ndarray:
    """Generator of the static evolution ``exp(-i H_F t)``: ``int_0^t_f e^{i H_F s} dH e^{-i H_F s} ds``."""
    HF = to_dense(H_F) if isinstance(H_F, PauliOperator) else np.asarray(H_F)
    D = to_dense(dlam_H) if isinstance(dlam_H, PauliOperator) else np.asarray(dlam_H)
    E, V = np.linalg.eigh(HF)
    Dp = V.conj().T @ D @ V
    out = V @ (Dp * phi_integral(E[:, None] - E[None, :], t_f)) @ V.conj().T
    return hermitize(out)
