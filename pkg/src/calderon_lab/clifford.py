"""Arithmetic in the Clifford algebra R_(2) (the quaternions) and its
complexification C_(2).

Elements are stored as arrays whose *leading* axis holds the four
coefficients in the fixed order ``(e0, e1, e2, e3)``, with ``e3 = e1 e2``.
Any trailing axes are treated as a batch, so the same kernels act on a
single number (shape ``(4,)``) and on a whole sampled field (shape
``(4, n0, n1, n2)``).  Real arrays represent R_(2), complex arrays C_(2).

The conjugation never touches the complex coefficients: it is the
Clifford conjugation only.

:class:`CliffordNum` is a thin immutable wrapper around a ``(4,)`` array for
interactive use and small constants.
"""

from __future__ import annotations

import numpy as np

from .errors import NotInvertible

__all__ = [
    "mul",
    "conj",
    "sc",
    "inner",
    "norm",
    "quadratic_form",
    "try_inverse",
    "basis",
    "CliffordNum",
    "E0",
    "E1",
    "E2",
    "E3",
]

_CONJ_SIGNS = np.array([1.0, -1.0, -1.0, -1.0])


def _as_coeffs(a):
    a = np.asarray(a)
    if a.shape[:1] != (4,):
        raise ValueError(f"expected leading axis of length 4, got shape {a.shape}")
    return a


def mul(a, b):
    """Clifford product ``a b`` of two coefficient arrays (leading axis 4).

    The product is the bilinear extension of e1^2 = e2^2 = e3^2 = -1,
    e1 e2 = -e2 e1 = e3, e2 e3 = e1, e3 e1 = e2.  Trailing axes broadcast.
    """
    a = _as_coeffs(a)
    b = _as_coeffs(b)
    a0, a1, a2, a3 = a
    b0, b1, b2, b3 = b
    return np.stack(
        [
            a0 * b0 - a1 * b1 - a2 * b2 - a3 * b3,
            a0 * b1 + a1 * b0 + a2 * b3 - a3 * b2,
            a0 * b2 + a2 * b0 + a3 * b1 - a1 * b3,
            a0 * b3 + a3 * b0 + a1 * b2 - a2 * b1,
        ]
    )


def conj(a):
    """Clifford conjugation: keep e0, negate e1, e2, e3."""
    a = _as_coeffs(a)
    return a * _CONJ_SIGNS.reshape((4,) + (1,) * (a.ndim - 1))


def sc(a):
    """Scalar part (the e0 coefficient)."""
    return _as_coeffs(a)[0]


def inner(a, b):
    """Clifford-valued inner product reduced to its scalar part, Sc(conj(a) b).

    For real coefficients this is the Euclidean dot product on R^4.  For
    complex coefficients it is the *bilinear* extension (no complex
    conjugation), consistent with :func:`conj`.
    """
    # Sc(conj(a) b) = a0 b0 + a1 b1 + a2 b2 + a3 b3
    a = _as_coeffs(a)
    b = _as_coeffs(b)
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]


def norm(a):
    """Euclidean norm of the coefficients; moduli are used for complex entries."""
    a = _as_coeffs(a)
    return np.sqrt(np.sum(np.abs(a) ** 2, axis=0))


def quadratic_form(a):
    """conj(a) a, which is always a multiple of e0: returns that multiple."""
    a = _as_coeffs(a)
    return a[0] * a[0] + a[1] * a[1] + a[2] * a[2] + a[3] * a[3]


def try_inverse(a, rtol=1e-12):
    """Two-sided inverse ``conj(a) / (conj(a) a)``.

    Raises :class:`NotInvertible` when ``conj(a) a`` vanishes relative to
    ``norm(a)**2`` (a zero divisor of C_(2), or zero itself).
    """
    a = _as_coeffs(a)
    q = quadratic_form(a)
    scale = np.sum(np.abs(a) ** 2, axis=0)
    if np.any(np.abs(q) <= rtol * scale) or np.any(scale == 0):
        raise NotInvertible(f"conj(a) a = {q!r} is not invertible")
    return conj(a) / q


def basis(j, dtype=float):
    """Coefficient array of the basis element e_j."""
    out = np.zeros(4, dtype=dtype)
    out[j] = 1
    return out


class CliffordNum:
    """A single immutable element of R_(2) or C_(2)."""

    __slots__ = ("_c",)

    def __init__(self, c0=0.0, c1=0.0, c2=0.0, c3=0.0):
        c = np.array([c0, c1, c2, c3])
        if not np.iscomplexobj(c):
            c = c.astype(float)
        c.flags.writeable = False
        self._c = c

    @classmethod
    def from_array(cls, coeffs):
        coeffs = np.asarray(coeffs)
        if coeffs.shape != (4,):
            raise ValueError(f"expected 4 coefficients, got shape {coeffs.shape}")
        return cls(*coeffs)

    @property
    def coeffs(self):
        return self._c

    @property
    def kind(self):
        return "complex" if np.iscomplexobj(self._c) else "real"

    def __iter__(self):
        return iter(self._c)

    def __getitem__(self, j):
        return self._c[j]

    def _coerce(self, other):
        if isinstance(other, CliffordNum):
            return other._c
        if np.isscalar(other):
            return np.array([other, 0, 0, 0])
        return NotImplemented

    def __add__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        return CliffordNum.from_array(self._c + o)

    __radd__ = __add__

    def __sub__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        return CliffordNum.from_array(self._c - o)

    def __rsub__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        return CliffordNum.from_array(o - self._c)

    def __neg__(self):
        return CliffordNum.from_array(-self._c)

    def __mul__(self, other):
        if np.isscalar(other):
            return CliffordNum.from_array(self._c * other)
        if isinstance(other, CliffordNum):
            return CliffordNum.from_array(mul(self._c, other._c))
        return NotImplemented

    def __rmul__(self, other):
        if np.isscalar(other):
            return CliffordNum.from_array(other * self._c)
        return NotImplemented

    def __truediv__(self, other):
        if np.isscalar(other):
            return CliffordNum.from_array(self._c / other)
        return NotImplemented

    def __eq__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        return bool(np.all(self._c == o))

    def __hash__(self):
        return hash(tuple(self._c.tolist()))

    def conj(self):
        return CliffordNum.from_array(conj(self._c))

    def sc(self):
        return self._c[0]

    def inner(self, other):
        return inner(self._c, other._c)

    def norm(self):
        return float(norm(self._c))

    def inverse(self):
        return CliffordNum.from_array(try_inverse(self._c))

    def isclose(self, other, atol=1e-12):
        o = self._coerce(other)
        return bool(np.all(np.abs(self._c - o) <= atol))

    def __repr__(self):
        return "CliffordNum({}, {}, {}, {})".format(*(repr(c) for c in self._c.tolist()))


E0 = CliffordNum(1.0, 0.0, 0.0, 0.0)
E1 = CliffordNum(0.0, 1.0, 0.0, 0.0)
E2 = CliffordNum(0.0, 0.0, 1.0, 0.0)
E3 = CliffordNum(0.0, 0.0, 0.0, 1.0)
