"""Monogenic exponentials E1, E2, E with values in C_(2).

For ``zeta = (zeta1, zeta2)`` in C^2 write ``zh = zeta1 e1 + zeta2 e2`` and
let ``N`` be a chosen square root of ``zeta1**2 + zeta2**2`` (the complex
norm; which root is used is part of the :class:`Frequency`).  Then

* ``E1(x) = exp(i(x1 zeta1 + x2 zeta2)) (cosh(x0 N) - i zh sinh(x0 N) / N)``
* ``E2(x) = exp(i(x1 zeta1 + x2 zeta2)) (sinh(x0 N) - i zh cosh(x0 N) / N)``
* ``E(x)  = E1 - E2 = exp(i(x1 zeta1 + x2 zeta2) - x0 N) Z``,
  with ``Z = e0 + i zh / N``.

``E1`` depends on ``N`` only through even functions, so it is well defined
(and evaluated) for null frequencies too.
"""

from __future__ import annotations

import cmath
from dataclasses import dataclass

import numpy as np

from . import clifford as cl
from .errors import ZeroNorm

__all__ = [
    "Frequency",
    "norm_c",
    "eval_E1",
    "eval_E2",
    "eval_E",
    "eval_ScE",
    "make_Z",
]


def principal_sqrt(s):
    """Principal square root; on the negative real axis the root with positive imaginary part."""
    s = complex(s)
    if s.imag == 0.0 and s.real < 0.0:
        return complex(0.0, np.sqrt(-s.real))
    return cmath.sqrt(s)


def norm_c(zeta1, zeta2):
    """Principal branch of |zeta|_C = sqrt(zeta1**2 + zeta2**2)."""
    return principal_sqrt(complex(zeta1) ** 2 + complex(zeta2) ** 2)


@dataclass(frozen=True)
class Frequency:
    """A point of C^2 together with the square root of ``zeta . zeta`` in use.

    ``branch`` is ``"principal"`` or ``"forced"``.
    """

    zeta1: complex
    zeta2: complex
    normC: complex
    branch: str = "principal"

    @classmethod
    def principal(cls, zeta1, zeta2):
        return cls(complex(zeta1), complex(zeta2), norm_c(zeta1, zeta2), "principal")

    @classmethod
    def forced(cls, zeta1, zeta2, norm, rtol=1e-12):
        z1, z2, n = complex(zeta1), complex(zeta2), complex(norm)
        sq = z1 * z1 + z2 * z2
        scale = max(abs(z1) ** 2 + abs(z2) ** 2, abs(n) ** 2, 1e-300)
        if abs(n * n - sq) > rtol * scale:
            raise ValueError(f"{n!r} is not a square root of zeta1^2 + zeta2^2 = {sq!r}")
        return cls(z1, z2, n, "forced")

    def __post_init__(self):
        if self.branch not in ("principal", "forced"):
            raise ValueError(f"unknown branch tag {self.branch!r}")

    @property
    def zeta(self):
        return (self.zeta1, self.zeta2)

    def flipped(self):
        """Same point of C^2 with the opposite square root."""
        return Frequency(self.zeta1, self.zeta2, -self.normC, "forced")

    def __neg__(self):
        return Frequency(-self.zeta1, -self.zeta2, self.normC, self.branch)

    def is_null(self, atol=0.0):
        return abs(self.normC) <= atol

    def zeta_hat(self):
        """Coefficients of ``zeta1 e1 + zeta2 e2``."""
        return np.array([0.0, self.zeta1, self.zeta2, 0.0], dtype=complex)


def _points(x):
    x = np.asarray(x, dtype=float)
    if x.shape[:1] != (3,):
        raise ValueError("points must have a leading axis of length 3")
    return x


def _phase(x, freq):
    return np.exp(1j * (x[1] * freq.zeta1 + x[2] * freq.zeta2))


def _sinhc(z):
    """sinh(z)/z with the removable singularity filled in."""
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < 1e-4
    safe = np.where(small, 1.0, z)
    z2 = z * z
    return np.where(small, 1.0 + z2 / 6.0 + z2 * z2 / 120.0, np.sinh(safe) / safe)


def _combine(scalar, vector_coef, freq):
    """``scalar e0 + vector_coef * (zeta1 e1 + zeta2 e2)`` as a (4, ...) array."""
    zero = np.zeros_like(scalar)
    return np.stack([scalar, vector_coef * freq.zeta1, vector_coef * freq.zeta2, zero])


def eval_E1(x, freq):
    """E1 at points ``x`` (shape ``(3, ...)``); returns a (4, ...) complex array."""
    x = _points(x)
    N = freq.normC
    ph = _phase(x, freq)
    ch = np.cosh(x[0] * N)
    # sinh(x0 N)/N = x0 sinhc(x0 N): even in N, finite at N = 0
    sh_over_n = x[0] * _sinhc(x[0] * N)
    return _combine(ph * ch, -1j * ph * sh_over_n, freq)


def _require_norm(freq):
    if freq.normC == 0:
        raise ZeroNorm(f"|zeta|_C vanishes for zeta = {freq.zeta}")


def eval_E2(x, freq):
    x = _points(x)
    _require_norm(freq)
    N = freq.normC
    ph = _phase(x, freq)
    return _combine(ph * np.sinh(x[0] * N), -1j * ph * np.cosh(x[0] * N) / N, freq)


def eval_ScE(x, freq):
    """Scalar part of E: ``exp(i(x1 zeta1 + x2 zeta2) - x0 N)``.

    No division by N is involved, so null frequencies are accepted.
    """
    x = _points(x)
    return np.exp(1j * (x[1] * freq.zeta1 + x[2] * freq.zeta2) - x[0] * freq.normC)


def eval_E(x, freq):
    _require_norm(freq)
    s = eval_ScE(x, freq)
    return _combine(s, 1j * s / freq.normC, freq)


def make_Z(freq, atol=1e-12):
    """``Z = e0 + i zh / N``; checks ``Z Z = 2 Z`` and ``conj(Z) Z = 0``."""
    _require_norm(freq)
    z = np.array([1.0, 1j * freq.zeta1 / freq.normC, 1j * freq.zeta2 / freq.normC, 0.0])
    scale = max(1.0, float(cl.norm(z)) ** 2)
    if np.max(np.abs(cl.mul(z, z) - 2 * z)) > atol * scale:
        raise ArithmeticError("Z fails Z Z = 2 Z")
    if np.max(np.abs(cl.mul(cl.conj(z), z))) > atol * scale:
        raise ArithmeticError("Z fails conj(Z) Z = 0")
    return cl.CliffordNum.from_array(z)
