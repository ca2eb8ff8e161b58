"""Two-body drives whose harmonic commutator synthesizes a three-body term.

Each constructor returns ``H_l`` (and its adjoint ``H_{-l}``) built from one or
two nearest-neighbour families ``sum_i z_i P^a_i P^b_{i+1}`` on a periodic
chain.  Overlaps at a shared middle site produce
``-4 eps_{b c g} Im(z_i conj(w_{i+1})) P^a_i P^g_{i+1} P^d_{i+2}`` for families
``(a, b)`` at ``i`` and ``(c, d)`` at ``i + 1``.  Terms on a shared pair of sites
are at most two-body and are handed back as a residue to be cancelled by a
static control.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import ConstraintError, UnsupportedPatternError, ValidationError
from .floquet import HarmonicDrive
from .pauli import LETTERS, PauliOperator, commutator

RATIO_TOL = 1e-12


def levi_civita(a: str, b: str, c: str) -> int:
    if len({a, b, c}) < 3:
        return 0
    idx = tuple(LETTERS.index(x) for x in (a, b, c))
    return 1 if idx in ((0, 1, 2), (1, 2, 0), (2, 0, 1)) else -1


def third_letter(a: str, b: str) -> str:
    (c,) = set(LETTERS) - {a, b}
    return c


def common_ratio_violation(z: Sequence[complex]) -> float:
    """``max_i |Im(z_i conj(z_{i+1}))|`` with periodic wrap.

    Zero exactly when every ``z_i`` shares one Re/Im ratio.
    """
    z = np.asarray(z, dtype=complex)
    return float(np.max(np.abs(np.imag(z * np.conj(np.roll(z, -1)))))) if z.size else 0.0


def common_ratio_coefficients(alpha: float, v: Sequence[float]) -> np.ndarray:
    """Coefficients ``(alpha + i) v_i`` sharing the ratio ``alpha``; ``alpha = inf`` gives real ``v_i``."""
    v = np.asarray(v, dtype=float)
    if math.isinf(alpha):
        return v.astype(complex)
    return (alpha + 1j) * v


def family_operator(family: str, z: Sequence[complex], n: int) -> PauliOperator:
    """``sum_i z_i P^a_i P^b_{i+1}`` with periodic wrap."""
    a, b = family
    terms = {}
    for i in range(n):
        key = ((i, a), ((i + 1) % n, b))
        terms[key] = terms.get(key, 0) + z[i]
    return PauliOperator(n, terms.items())


def predicted_three_body(families: Mapping[str, Sequence[complex]], n: int) -> PauliOperator:
    """Three-body part of ``[H, H^dagger]`` for ``H = sum_f family_operator(f)``, from the overlap rule."""
    out = {}
    for f, z in families.items():
        for g, w in families.items():
            a, b = f
            c, d = g
            if b == c:
                continue
            gamma = third_letter(b, c)
            eps = levi_civita(b, c, gamma)
            for i in range(n):
                coeff = -4 * eps * (complex(z[i]) * np.conj(complex(w[(i + 1) % n]))).imag
                key = ((i, a), ((i + 1) % n, gamma), ((i + 2) % n, d))
                out[key] = out.get(key, 0) + coeff
    return PauliOperator(n, out.items())


@dataclass(frozen=True)
class ThreeBodyDrive:
    """One harmonic of a three-body-synthesizing drive.

    Attributes
    ----------
    case : int
        1 for ``kkk``, 2 for ``kmk``, 3 for all-distinct ``kml``, 4 for ``kkl + mml``.
    families : dict
        Family label (two letters) to per-site coefficients.
    commutator : PauliOperator
        ``[H_l, H_{-l}]`` evaluated symbolically.
    three_body, residual : PauliOperator
        Weight-three part and the at-most-two-body remainder of ``commutator``.
    predicted : PauliOperator
        Three-body part from the overlap rule.
    """

    case: int
    pattern: str
    families: dict
    H_plus: PauliOperator
    H_minus: PauliOperator
    commutator: PauliOperator
    three_body: PauliOperator
    residual: PauliOperator
    predicted: PauliOperator

    def target_coefficient(self) -> float:
        """Uniform coefficient of the first target string (site 0)."""
        label = self.pattern.split("+")[0]
        key = tuple((i, ch) for i, ch in enumerate(label))
        return self.three_body.coefficient(key).real


def classify(pattern: str) -> tuple[int, list[str]]:
    """Return the case number and the drive families for a three-body pattern.

    ``pattern`` is three letters (``"XXX"``, ``"XZX"``, ``"XZY"``) or a
    pair ``"XXZ+YYZ"``.
    """
    p = pattern.replace(" ", "").upper()
    parts = p.split("+")
    if any(len(x) != 3 or set(x) - set(LETTERS) for x in parts):
        raise UnsupportedPatternError(f"malformed pattern {pattern!r}")
    if len(parts) == 1:
        k, m, l = p
        if k == m == l:
            # families (k, lam) and (mu, k) with [lam, mu] = 2i k
            lam = LETTERS[(LETTERS.index(k) + 1) % 3]
            mu = LETTERS[(LETTERS.index(k) + 2) % 3]
            return 1, [k + lam, mu + k]
        if k == l:
            return 2, [k + third_letter(k, m), k + k]
        if len({k, m, l}) == 3:
            return 3, [k + l]
        raise UnsupportedPatternError(
            f"pattern {p} has no first-order scheme on its own; pair it as 'kkl+mml'")
    if len(parts) == 2:
        (k1, k2, l1), (m1, m2, l2) = parts
        if k1 == k2 and m1 == m2 and l1 == l2 and len({k1, m1, l1}) == 3:
            return 4, [k1 + l1, m1 + l1]
    raise UnsupportedPatternError(f"unsupported pattern {pattern!r}")


def staircase_profile(n: int, amplitude: float = 1.0, alpha0: float = 0.0,
                      step: float = 1.0) -> np.ndarray:
    """Inhomogeneous single-family profile giving a uniform ``Im(c_i conj(c_{i+1})) = step * amplitude^2``.

    ``alpha_i = alpha0 + i*step`` and ``v_i = amplitude`` for the first ``n - 1`` sites;
    the last site closes the ring with ``alpha = alpha0 + (n-2)*step/2`` and ``v = 2*amplitude/(2-n)``.
    """
    if n < 3:
        raise ValidationError("staircase needs n >= 3")
    alpha = alpha0 + step * np.arange(n, dtype=float)
    v = np.full(n, float(amplitude))
    alpha[-1] = alpha0 + (n - 2) * step / 2
    v[-1] = 2 * amplitude / (2 - n)
    return (alpha + 1j) * v


def default_coefficients(case: int, families: list[str], n: int, amplitude: float = 1.0) -> dict:
    if case == 3:
        return {families[0]: staircase_profile(n, amplitude)}
    # first family real (alpha = inf), second purely imaginary (alpha = 0)
    return {families[0]: np.full(n, amplitude, dtype=complex),
            families[1]: np.full(n, -1j * amplitude, dtype=complex)}


def three_body_drive(pattern: str, n: int, coefficients: Mapping[str, Sequence[complex]] | None = None,
                     *, amplitude: float = 1.0) -> ThreeBodyDrive:
    """Build one harmonic ``H_l`` that synthesizes ``pattern`` through ``[H_l, H_{-l}]``.

    Parameters
    ----------
    pattern : str
        Target three-body pattern, see :func:`classify`.
    n : int
        Sites of the periodic chain (``n >= 3``).
    coefficients : mapping, optional
        Per-family coefficient arrays (length ``n``) or scalars.  Families are the
        two-letter labels returned by :func:`classify`.  Defaults to a real first
        family and an imaginary second family of size ``amplitude`` (cases 1, 2, 4),
        or a staircase profile (case 3).

    Raises
    ------
    UnsupportedPatternError
        Pattern outside the four supported cases.
    ConstraintError
        Homogeneous-ratio condition broken (cases 1, 2, 4) or a case-3 profile with
        a common ratio, which synthesizes nothing.
    """
    if n < 3:
        raise ValidationError(f"three-body drives need n >= 3, got {n}")
    case, families = classify(pattern)
    if coefficients is None:
        coeffs = default_coefficients(case, families, n, amplitude)
    else:
        unknown = set(coefficients) - set(families)
        if unknown:
            raise ValidationError(f"families {sorted(unknown)} not used by case {case}; expected {families}")
        coeffs = {}
        for f in families:
            z = np.broadcast_to(np.asarray(coefficients.get(f, 0.0), dtype=complex), (n,)).copy()
            coeffs[f] = z
    if case == 3:
        if common_ratio_violation(coeffs[families[0]]) <= RATIO_TOL:
            raise ConstraintError("case-3 profile has a common Re/Im ratio; the three-body term vanishes")
    else:
        for f, z in coeffs.items():
            bad = common_ratio_violation(z)
            if bad > RATIO_TOL:
                raise ConstraintError(f"family {f} breaks the common-ratio condition (max |Im z_i z*_i+1| = {bad:.3g})")

    H = PauliOperator.zero(n)
    for f, z in coeffs.items():
        H = H + family_operator(f, z, n)
    Hm = H.adjoint()
    comm = commutator(H, Hm)
    three = comm.restrict_weight(3)
    residual = comm - three
    return ThreeBodyDrive(case, pattern.replace(" ", "").upper(), coeffs, H, Hm, comm, three, residual,
                          predicted_three_body(coeffs, n))


def cancelling_drive(pattern: str, J: float, n: int, omega: float,
                     harmonics: Sequence[int] = (1, 2, 3, 4, 5)) -> tuple[HarmonicDrive, PauliOperator]:
    """Drive and static counter-term whose effective Hamiltonian removes ``J/2 sum_i pattern_i``.

    Every harmonic uses the same unit scheme scaled by a common amplitude ``v``;
    the first-order term is ``(1/omega) sum_l k v^2 / l`` per target string, with
    ``k`` the unit-scheme coefficient.  The returned static operator cancels the
    two-body residue of every harmonic.
    """
    if not omega > 0:
        raise ValidationError("omega must be positive")
    unit = three_body_drive(pattern, n)
    k = unit.target_coefficient()
    s = math.fsum(1.0 / l for l in harmonics)
    v2 = -J * omega / (2 * k * s)
    case, families = classify(pattern)
    coeffs = unit.families
    if v2 < 0:
        # flip the sign of the generated term by conjugating one family (case 3: reverse the ratio step)
        if case == 3:
            coeffs = {families[0]: np.conj(coeffs[families[0]])}
        else:
            coeffs = {families[0]: coeffs[families[0]], families[1]: -coeffs[families[1]]}
        v2 = -v2
    v = math.sqrt(v2)
    tb = three_body_drive(pattern, n, {f: v * z for f, z in coeffs.items()})
    drive = HarmonicDrive(omega, {l: tb.H_plus for l in harmonics})
    static = -(tb.residual * s / omega).hermitian_part()
    return drive, static
