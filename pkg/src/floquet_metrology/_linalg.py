"""Small dense linear-algebra helpers shared across modules."""
from __future__ import annotations

import numpy as np


def hermitize(a: np.ndarray) -> np.ndarray:
    return (a + np.conj(np.swapaxes(a, -1, -2))) / 2


def dagger(a: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


def phi_integral(x, delta: float):
    """``int_0^delta exp(i x s) ds``, stable for ``x -> 0``."""
    half = 0.5 * np.asarray(x) * delta
    return delta * np.exp(1j * half) * np.sinc(half / np.pi)


def spread(h: np.ndarray) -> float:
    """Difference between the largest and smallest eigenvalue."""
    w = np.linalg.eigvalsh(hermitize(h))
    return float(w[-1] - w[0])


def expm_hermitian(h: np.ndarray, t: float = 1.0) -> np.ndarray:
    """``exp(-i h t)`` for Hermitian ``h`` (batched over leading axes)."""
    w, v = np.linalg.eigh(hermitize(h))
    return (v * np.exp(-1j * w * t)[..., None, :]) @ dagger(v)


def max_abs(a) -> float:
    a = np.asarray(a)
    return float(np.max(np.abs(a))) if a.size else 0.0
