"""Sparse algebra over tensor products of Pauli matrices.

Operators are stored as dictionaries mapping a canonical letter map (a tuple of
``(site, letter)`` pairs sorted by site) to a complex coefficient.  All values
are immutable after construction, so they can be shared freely.

Site 0 is the leftmost factor of the Kronecker product, i.e. the most
significant bit of a computational-basis index.
"""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping

import numpy as np

from .errors import CapacityError, DimensionError

LETTERS = ("X", "Y", "Z")
ZERO_THRESHOLD = 1e-14
DENSE_LIMIT = 12

# (a, b) -> (phase, c) with sigma_a sigma_b = phase * sigma_c ("I" for identity)
_PRODUCT = {
    ("X", "X"): (1, "I"), ("Y", "Y"): (1, "I"), ("Z", "Z"): (1, "I"),
    ("X", "Y"): (1j, "Z"), ("Y", "Z"): (1j, "X"), ("Z", "X"): (1j, "Y"),
    ("Y", "X"): (-1j, "Z"), ("Z", "Y"): (-1j, "X"), ("X", "Z"): (-1j, "Y"),
}

Letters = tuple[tuple[int, str], ...]


class BoundaryCondition(enum.Enum):
    PERIODIC = "periodic"
    OPEN = "open"

    @classmethod
    def parse(cls, value: "BoundaryCondition | str") -> "BoundaryCondition":
        if isinstance(value, cls):
            return value
        return cls(str(value).lower())


def _canonical(letters: Mapping[int, str] | Iterable[tuple[int, str]], n_sites: int) -> Letters:
    items = dict(letters).items() if not isinstance(letters, Mapping) else letters.items()
    out = []
    for site, letter in items:
        site = int(site)
        letter = str(letter).upper()
        if not 0 <= site < n_sites:
            raise DimensionError(f"site {site} outside [0, {n_sites})")
        if letter == "I":
            continue
        if letter not in LETTERS:
            raise ValueError(f"unknown Pauli letter {letter!r}")
        out.append((site, letter))
    return tuple(sorted(out))


def _multiply_letters(a: Letters, b: Letters) -> tuple[complex, Letters]:
    phase: complex = 1
    out = []
    i = j = 0
    while i < len(a) and j < len(b):
        sa, la = a[i]
        sb, lb = b[j]
        if sa < sb:
            out.append(a[i])
            i += 1
        elif sb < sa:
            out.append(b[j])
            j += 1
        else:
            p, lc = _PRODUCT[(la, lb)]
            phase *= p
            if lc != "I":
                out.append((sa, lc))
            i += 1
            j += 1
    out.extend(a[i:])
    out.extend(b[j:])
    return phase, tuple(out)


def anticommuting_sites(a: Letters, b: Letters) -> int:
    """Number of shared sites carrying different letters (``p - q``)."""
    da = dict(a)
    return sum(1 for site, letter in b if site in da and da[site] != letter)


@dataclass(frozen=True)
class PauliString:
    """A single Pauli string ``coefficient * sigma^{a_1}_{i_1} ... sigma^{a_k}_{i_k}``."""

    n_sites: int
    letters: Letters = ()
    coefficient: complex = 1.0

    def __post_init__(self):
        object.__setattr__(self, "letters", _canonical(self.letters, self.n_sites))
        object.__setattr__(self, "coefficient", complex(self.coefficient))

    @classmethod
    def from_label(cls, label: str, n_sites: int, coefficient: complex = 1.0) -> "PauliString":
        """Parse ``"X0 Y1"`` or a dense label such as ``"XYI"``."""
        return cls(n_sites, _parse_label(label, n_sites), coefficient)

    @property
    def weight(self) -> int:
        return len(self.letters)

    @property
    def sites(self) -> tuple[int, ...]:
        return tuple(s for s, _ in self.letters)

    def label(self) -> str:
        return " ".join(f"{l}{s}" for s, l in self.letters) or "I"

    def __mul__(self, other):
        if isinstance(other, PauliString):
            return multiply(self, other)
        return PauliString(self.n_sites, self.letters, self.coefficient * complex(other))

    __rmul__ = lambda self, other: PauliString(self.n_sites, self.letters, self.coefficient * complex(other))  # noqa: E731

    def to_operator(self) -> "PauliOperator":
        return PauliOperator(self.n_sites, {self.letters: self.coefficient})


def _parse_label(label: str, n_sites: int) -> Letters:
    label = label.strip()
    if not label or label == "I":
        return ()
    if " " not in label and len(label) == n_sites and all(c in "IXYZ" for c in label.upper()):
        return _canonical({i: c for i, c in enumerate(label.upper())}, n_sites)
    out = {}
    for token in label.replace(",", " ").split():
        letter, site = token[0].upper(), int(token[1:])
        if site in out:
            raise ValueError(f"site {site} repeated in {label!r}")
        out[site] = letter
    return _canonical(out, n_sites)


def multiply(a: PauliString, b: PauliString) -> PauliString:
    """Matrix product of two Pauli strings, tracking the accumulated phase."""
    if a.n_sites != b.n_sites:
        raise DimensionError(f"cannot multiply strings on {a.n_sites} and {b.n_sites} sites")
    phase, letters = _multiply_letters(a.letters, b.letters)
    return PauliString(a.n_sites, letters, phase * a.coefficient * b.coefficient)


class PauliOperator:
    """Normalized linear combination of Pauli strings on ``n_sites`` sites."""

    __slots__ = ("n_sites", "_terms")

    def __init__(self, n_sites: int, terms: Mapping | Iterable = (), *, threshold: float = ZERO_THRESHOLD):
        if n_sites < 1:
            raise DimensionError("n_sites must be positive")
        self.n_sites = int(n_sites)
        acc: dict[Letters, complex] = {}
        items = terms.items() if isinstance(terms, Mapping) else terms
        for item in items:
            if isinstance(item, PauliString):
                if item.n_sites != self.n_sites:
                    raise DimensionError("string and operator site counts differ")
                key, coeff = item.letters, item.coefficient
            else:
                key, coeff = item
                if isinstance(key, str):
                    key = _parse_label(key, self.n_sites)
                else:
                    key = _canonical(key, self.n_sites)
            acc[key] = acc.get(key, 0j) + complex(coeff)
        self._terms = {k: v for k, v in sorted(acc.items(), key=lambda kv: _sort_key(kv[0]))
                       if abs(v) >= threshold}

    # construction helpers
    @classmethod
    def zero(cls, n_sites: int) -> "PauliOperator":
        return cls(n_sites)

    @classmethod
    def identity(cls, n_sites: int, coefficient: complex = 1.0) -> "PauliOperator":
        return cls(n_sites, {(): coefficient})

    @classmethod
    def from_label(cls, label: str, n_sites: int, coefficient: complex = 1.0) -> "PauliOperator":
        return cls(n_sites, {_parse_label(label, n_sites): coefficient})

    # views
    @property
    def terms(self) -> tuple[PauliString, ...]:
        return tuple(PauliString(self.n_sites, k, v) for k, v in self._terms.items())

    def items(self) -> Iterator[tuple[Letters, complex]]:
        return iter(self._terms.items())

    def coefficient(self, letters: Letters | str) -> complex:
        if isinstance(letters, str):
            letters = _parse_label(letters, self.n_sites)
        return self._terms.get(_canonical(letters, self.n_sites), 0j)

    def __len__(self) -> int:
        return len(self._terms)

    def __bool__(self) -> bool:
        return bool(self._terms)

    @property
    def max_weight(self) -> int:
        return max((len(k) for k in self._terms), default=0)

    def restrict_weight(self, weight: int) -> "PauliOperator":
        """Terms acting on exactly ``weight`` sites."""
        return PauliOperator(self.n_sites, {k: v for k, v in self._terms.items() if len(k) == weight})

    def norm_bound(self) -> float:
        """Sum of absolute coefficients, an upper bound on the operator norm."""
        return float(sum(abs(v) for v in self._terms.values()))

    # algebra
    def _check(self, other: "PauliOperator"):
        if self.n_sites != other.n_sites:
            raise DimensionError(f"operators act on {self.n_sites} and {other.n_sites} sites")

    def __add__(self, other):
        if isinstance(other, PauliString):
            other = other.to_operator()
        if not isinstance(other, PauliOperator):
            if other == 0:
                return self
            return NotImplemented
        self._check(other)
        return PauliOperator(self.n_sites, itertools.chain(self._terms.items(), other._terms.items()))

    __radd__ = __add__

    def __neg__(self):
        return PauliOperator(self.n_sites, {k: -v for k, v in self._terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, (PauliOperator, PauliString)):
            return self @ other
        c = complex(other)
        return PauliOperator(self.n_sites, {k: c * v for k, v in self._terms.items()})

    def __rmul__(self, other):
        c = complex(other)
        return PauliOperator(self.n_sites, {k: c * v for k, v in self._terms.items()})

    def __truediv__(self, other):
        return self * (1.0 / complex(other))

    def __matmul__(self, other):
        if isinstance(other, PauliString):
            other = other.to_operator()
        self._check(other)
        acc: dict[Letters, complex] = {}
        for ka, va in self._terms.items():
            for kb, vb in other._terms.items():
                phase, key = _multiply_letters(ka, kb)
                acc[key] = acc.get(key, 0j) + phase * va * vb
        return PauliOperator(self.n_sites, acc)

    def adjoint(self) -> "PauliOperator":
        return PauliOperator(self.n_sites, {k: v.conjugate() for k, v in self._terms.items()})

    def is_hermitian(self, tol: float = 0.0) -> bool:
        return all(abs(v.imag) <= tol for v in self._terms.values())

    def hermitian_part(self) -> "PauliOperator":
        return PauliOperator(self.n_sites, {k: v.real for k, v in self._terms.items()})

    def is_traceless(self) -> bool:
        return () not in self._terms

    def equals(self, other: "PauliOperator", tol: float = 1e-12) -> bool:
        if self.n_sites != other.n_sites:
            return False
        diff = self - other
        return all(abs(v) <= tol for v in diff._terms.values())

    def __eq__(self, other):
        if not isinstance(other, PauliOperator):
            return NotImplemented
        return self.n_sites == other.n_sites and self._terms == other._terms

    def __hash__(self):
        return hash((self.n_sites, tuple(self._terms.items())))

    def __repr__(self):
        if not self._terms:
            return f"PauliOperator(n={self.n_sites}, 0)"
        body = " + ".join(f"({_fmt(v)}) {PauliString(self.n_sites, k).label()}" for k, v in self._terms.items())
        return f"PauliOperator(n={self.n_sites}, {body})"

    def to_dense(self, limit: int = DENSE_LIMIT) -> np.ndarray:
        return to_dense(self, limit=limit)


def _sort_key(letters: Letters):
    return (len(letters), letters)


def _fmt(z: complex) -> str:
    if z.imag == 0:
        return f"{z.real:g}"
    return f"{z.real:g}{z.imag:+g}j"


def as_operator(x, n_sites: int | None = None) -> PauliOperator:
    if isinstance(x, PauliOperator):
        return x
    if isinstance(x, PauliString):
        return x.to_operator()
    raise TypeError(f"expected a Pauli operator, got {type(x).__name__}")


def commutator(a, b) -> PauliOperator:
    """``[a, b] = ab - ba`` computed string by string.

    Pairs whose count of shared sites with differing letters is even commute
    and are skipped; the rest contribute ``2 * a_k b_l * P_k P_l``.
    """
    a, b = as_operator(a), as_operator(b)
    a._check(b)
    acc: dict[Letters, complex] = {}
    for ka, va in a._terms.items():
        for kb, vb in b._terms.items():
            if anticommuting_sites(ka, kb) % 2 == 0:
                continue
            phase, key = _multiply_letters(ka, kb)
            acc[key] = acc.get(key, 0j) + 2 * phase * va * vb
    return PauliOperator(a.n_sites, acc)


def _string_action(letters: Letters, n: int):
    """Return (row indices, values) such that P|b> = val[b] |row[b]>."""
    xmask = zmask = 0
    ny = 0
    for site, letter in letters:
        bit = 1 << (n - 1 - site)
        if letter in "XY":
            xmask |= bit
        if letter in "YZ":
            zmask |= bit
        if letter == "Y":
            ny += 1
    cols = np.arange(1 << n, dtype=np.int64)
    # Y = i X Z on every site
    parity = np.bitwise_count(cols & zmask) & 1
    vals = (1j ** ny) * (1.0 - 2.0 * parity)
    return cols ^ xmask, vals


def to_dense(op, limit: int = DENSE_LIMIT) -> np.ndarray:
    """Exact Kronecker expansion of ``op`` as a ``2^n x 2^n`` complex array."""
    op = as_operator(op)
    n = op.n_sites
    if n > limit:
        raise CapacityError(f"dense expansion of {n} sites exceeds the limit of {limit}")
    dim = 1 << n
    out = np.zeros((dim, dim), dtype=complex)
    cols = np.arange(dim)
    for letters, coeff in op._terms.items():
        rows, vals = _string_action(letters, n)
        out[rows, cols] += coeff * vals
    return out


def pauli_basis(n_sites: int, include_identity: bool = False) -> list[PauliOperator]:
    """All ``4^n`` (or ``4^n - 1`` traceless) Pauli strings as unit-coefficient operators."""
    out = []
    for labels in itertools.product("IXYZ", repeat=n_sites):
        if not include_identity and all(c == "I" for c in labels):
            continue
        out.append(PauliOperator(n_sites, {_canonical(dict(enumerate(labels)), n_sites): 1.0}))
    return out


def pauli_decompose(matrix: np.ndarray, tol: float = ZERO_THRESHOLD) -> PauliOperator:
    """Expand a dense ``2^n x 2^n`` matrix in the Pauli basis (Hilbert-Schmidt projection)."""
    matrix = np.asarray(matrix, dtype=complex)
    dim = matrix.shape[0]
    n = dim.bit_length() - 1
    if matrix.shape != (dim, dim) or 1 << n != dim:
        raise DimensionError(f"matrix of shape {matrix.shape} is not a qubit operator")
    cols = np.arange(dim)
    terms = {}
    for labels in itertools.product("IXYZ", repeat=n):
        letters = _canonical(dict(enumerate(labels)), n)
        rows, vals = _string_action(letters, n)
        # Tr(P^dag M) / dim with P|b> = v_b |r_b>
        c = np.sum(np.conj(vals) * matrix[rows, cols]) / dim
        if abs(c) >= tol:
            terms[letters] = c
    return PauliOperator(n, terms, threshold=tol)


# chain builders ------------------------------------------------------------

def chain_sum(pattern: str, n_sites: int, coefficients, bc=BoundaryCondition.PERIODIC) -> PauliOperator:
    """``sum_i c_i sigma^{p_0}_i sigma^{p_1}_{i+1} ...`` for a contiguous letter pattern.

    ``coefficients`` is a scalar or a length-``n`` sequence indexed by the first site.
    Under open boundaries only windows that fit inside the chain are kept.
    """
    bc = BoundaryCondition.parse(bc)
    k = len(pattern)
    coeffs = np.broadcast_to(np.asarray(coefficients, dtype=complex), (n_sites,))
    terms = []
    for i in range(n_sites):
        if bc is BoundaryCondition.OPEN and i + k > n_sites:
            break
        sites = [(i + r) % n_sites for r in range(k)]
        if len(set(sites)) < k:
            raise DimensionError(f"pattern {pattern!r} wraps onto itself on {n_sites} sites")
        phase, letters = 1, ()
        for r, s in enumerate(sites):
            ph, letters = _multiply_letters(letters, ((s, pattern[r].upper()),))
            phase *= ph
        terms.append((letters, phase * coeffs[i]))
    return PauliOperator(n_sites, terms)


def collective(letter: str, n_sites: int, coefficient: complex = 1.0) -> PauliOperator:
    return PauliOperator(n_sites, [(((i, letter),), coefficient) for i in range(n_sites)])


def build_spin_chain(n: int, J: float, Delta: float, lam: float, bc=BoundaryCondition.PERIODIC) -> PauliOperator:
    """Transverse spin chain with nearest-neighbour XX, three-body XXX and a Z field.

    ``H = J/2 sum X_i X_{i+1} + Delta/2 sum X_i X_{i+1} X_{i+2} + lam/2 sum Z_i``.
    """
    static, field = spin_chain_parts(n, J, Delta, bc)
    return static + lam * field


def spin_chain_parts(n: int, J: float, Delta: float, bc=BoundaryCondition.PERIODIC):
    """Split the chain into its field-independent part and ``d H / d lam = sum Z_i / 2``."""
    bc = BoundaryCondition.parse(bc)
    if n < 1:
        raise DimensionError("chain needs at least one site")
    if Delta != 0 and bc is BoundaryCondition.PERIODIC and n < 3:
        raise DimensionError(f"three-body term needs n >= 3 under periodic boundaries, got n={n}")
    static = PauliOperator.zero(n)
    if J != 0 and n >= 2:
        static = static + chain_sum("XX", n, J / 2, bc)
    if Delta != 0 and n >= 3:
        static = static + chain_sum("XXX", n, Delta / 2, bc)
    return static, collective("Z", n, 0.5)


# text serialization -----------------------------------------------------------

def format_operator(op: PauliOperator) -> str:
    """One term per line: ``coeff_re coeff_im site:letter ...`` after an ``# n_sites`` header."""
    lines = [f"# n_sites {op.n_sites}"]
    for letters, c in op.items():
        body = " ".join(f"{s}:{l}" for s, l in letters)
        lines.append(f"{c.real!r} {c.imag!r} {body}".rstrip())
    return "\n".join(lines) + "\n"


def parse_operator(text: str, n_sites: int | None = None) -> PauliOperator:
    terms = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if len(parts) == 2 and parts[0] == "n_sites":
                header = int(parts[1])
                if n_sites is not None and n_sites != header:
                    raise DimensionError(f"header says {header} sites, caller expects {n_sites}")
                n_sites = header
            continue
        fields = line.split()
        if len(fields) < 2:
            raise ValueError(f"malformed term line: {raw!r}")
        coeff = complex(float(fields[0]), float(fields[1]))
        letters = []
        for tok in fields[2:]:
            site, _, letter = tok.partition(":")
            letters.append((int(site), letter))
        terms.append((letters, coeff))
    if n_sites is None:
        raise ValueError("site count missing: no '# n_sites' header and none given")
    return PauliOperator(n_sites, [(_canonical(dict(l), n_sites), c) for l, c in terms])
