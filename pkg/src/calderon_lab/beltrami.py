"""Conductivity <-> Beltrami coefficient, sigma-harmonic conjugates, the
Clifford-Beltrami residual, the Alessandrini integrand and the residual
operators that arise when substituting ``F = E M`` into ``DF = mu D conj F``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.integrate as sint

from . import clifford as cl
from . import fields as fc
from . import spectral as sp
from .errors import CompatibilityFailure, DomainViolation, GridMismatch, SolverFailure
from .monogenic import make_Z

__all__ = [
    "Conductivity",
    "sigma_to_mu",
    "mu_to_sigma",
    "gauge_project",
    "vector_potential",
    "ConjugateResult",
    "conjugate_solve",
    "beltrami_residual",
    "alessandrini_integrand_check",
    "alessandrini_exact_integrand",
    "cgo_reduced_residual",
    "cgo_isolated_residual",
    "cgo_substitution_lhs",
]


@dataclass(frozen=True)
class Conductivity:
    """Sampled isotropic conductivity with a positive lower bound."""

    sigma: np.ndarray
    sigma0: float
    unit_near_boundary: bool = False

    def __post_init__(self):
        s = np.asarray(self.sigma, dtype=float)
        object.__setattr__(self, "sigma", s)
        if not self.sigma0 > 0:
            raise DomainViolation("sigma0 must be positive")
        if not np.all(s >= self.sigma0 * (1 - 1e-14)):
            raise DomainViolation(f"conductivity drops below sigma0 = {self.sigma0} (min {s.min()})")
        if self.unit_near_boundary:
            edge = np.ones(s.shape, dtype=bool)
            edge[2:-2, 2:-2, 2:-2] = False
            if not np.all(s[edge] == 1.0):
                raise DomainViolation("conductivity is not 1 on the two outermost node layers")

    @classmethod
    def from_array(cls, sigma, unit_near_boundary=False):
        sigma = np.asarray(sigma, dtype=float)
        return cls(sigma, float(sigma.min()), unit_near_boundary)


def _sigma_array(sigma):
    return sigma.sigma if isinstance(sigma, Conductivity) else np.asarray(sigma, dtype=float)


def sigma_to_mu(sigma):
    """mu = (1 - sigma) / (1 + sigma); the result satisfies |mu| < 1."""
    s = _sigma_array(sigma)
    if np.any(~(s > 0)):
        raise DomainViolation("conductivity must be positive everywhere")
    return (1.0 - s) / (1.0 + s)


def mu_to_sigma(mu, unit_near_boundary=False):
    mu = np.asarray(mu, dtype=float)
    if np.any(~(np.abs(mu) < 1)):
        raise DomainViolation("Beltrami coefficient must satisfy |mu| < 1")
    s = (1.0 - mu) / (1.0 + mu)
    if s.ndim == 0:
        return float(s)
    return Conductivity(s, float(s.min()), unit_near_boundary)


def gauge_project(V, h, tol=1e-8):
    """Add grad(phi) with lap(phi) = -div V to a periodic vector field.

    ``V`` has shape ``(3, p0, p1, p2)`` and is treated as periodic; phi is
    solved spectrally with zero mean, so the curl of ``V`` is unchanged and
    the spectral divergence of the output vanishes.
    """
    V = np.asarray(V)
    k = sp.wavenumbers(V.shape[1:], h)
    Vh = sp.fftn3(V)
    k2 = np.sum(k * k, axis=0)
    k2[k2 == 0] = 1.0  # DC and the zeroed Nyquist modes carry no gradient part
    kdotV = np.sum(k * Vh, axis=0)
    Wh = Vh - k * (kdotV / k2)
    div_h = np.sum(1j * k * Wh, axis=0)
    scale = np.sqrt(np.sum(np.abs(1j * k * Vh) ** 2)) + np.sqrt(np.sum(np.abs(Vh) ** 2))
    if scale > 0 and np.sqrt(np.sum(np.abs(div_h) ** 2)) > tol * scale:
        raise SolverFailure("spectral gauge projection left a divergence above tolerance")
    W = sp.ifftn3(Wh)
    return W.real if not np.iscomplexobj(V) else W


def vector_potential(J, h, pad_factor=2):
    """Divergence-free U with curl U = J for a compactly supported, div-free J.

    Solves ``-lap U = curl J`` on a zero-padded periodic box (Biot-Savart
    in Fourier space) and crops back to the input grid.
    """
    J = np.asarray(J)
    pad, off = sp.padded_layout(J.shape[1:], pad_factor)
    Jp = sp.embed(J, pad, off)
    k = sp.wavenumbers(pad, h)
    Jh = sp.fftn3(Jp)
    k2 = np.sum(k * k, axis=0)
    null = k2 == 0
    k2[null] = 1.0
    curlJ = 1j * np.cross(k, Jh, axis=0)
    Uh = curlJ / k2
    Uh[:, null] = 0.0
    U = gauge_project(sp.ifftn3(Uh).real, h)
    return sp.crop(U, J.shape[1:], off)


@dataclass
class ConjugateResult:
    """Output of :func:`conjugate_solve`.

    ``U`` lives on the full grid (NaN on the outer node layer).  Residuals
    are relative discrete L2 norms over ``valid``, the region where the
    gauge window is exactly 1 and FD stencils stay inside it.
    """

    U: np.ndarray
    curl_residual: float
    div_residual: float
    compat_residual: float
    valid: np.ndarray = field(repr=False)


def _axial_potential(J, h):
    """A (non-solenoidal) potential with curl = J, by integrating along x0."""
    cum = lambda f, ax: sint.cumulative_trapezoid(f, dx=h, axis=ax, initial=0.0)  # noqa: E731
    U1 = cum(J[2], 0)
    g2 = cum(J[0][0], 0)  # integrate the x0 = min face along x1
    U2 = -cum(J[1], 0) + g2[None, :, :]
    return np.stack([np.zeros_like(U1), U1, U2])


def conjugate_solve(sigma, u, h, compat_tol=1e-6, ramp=None, pad_factor=2):
    """sigma-harmonic conjugate: U with curl U = sigma grad u and div U = 0.

    ``sigma`` and ``u`` are sampled on the same grid; ``u`` must solve the
    conductivity equation to within ``compat_tol``, measured as
    ``||div(sigma grad u)|| <= compat_tol ||sigma grad u||``.

    A potential with the right curl is built by integrating along x0; it
    is then windowed, embedded in a 2x periodic box and gauge-projected
    spectrally.  The window only alters U by a gradient where it equals 1,
    so curl and divergence there are those of the solenoidal conjugate.
    """
    s = _sigma_array(sigma)
    u = np.asarray(u, dtype=float)
    if s.shape != u.shape:
        raise GridMismatch("sigma and u must share a grid")
    J = s * fc.grad(u, h)
    Ji = fc.interior(J, 1)
    norm_J = fc.l2_norm(J, h, depth=1)
    compat = fc.l2_norm(fc.div(J, h), h, depth=2)
    compat_rel = compat / norm_J if norm_J > 0 else 0.0
    if compat_rel > compat_tol:
        raise CompatibilityFailure(
            f"||div(sigma grad u)|| / ||sigma grad u|| = {compat_rel:.3e} exceeds {compat_tol:.1e}"
        )
    m = Ji.shape[1:]
    if ramp is None:
        ramp = max(3, min(m) // 6)
    full = np.full((3,) + u.shape, np.nan)
    valid = np.zeros(u.shape, dtype=bool)
    valid[1:-1, 1:-1, 1:-1] = sp.plateau_mask(m, ramp)
    # curl/div stencils must not touch the window ramp
    valid = valid & ~_dilate(~valid)
    if norm_J == 0:
        full[:, 1:-1, 1:-1, 1:-1] = 0.0
        return ConjugateResult(full, 0.0, 0.0, 0.0, valid)
    Ua = _axial_potential(Ji, h)
    Ua = Ua - np.mean(Ua[:, sp.plateau_mask(m, ramp)], axis=1)[:, None, None, None]
    w = sp.box_window(m, ramp)
    pad, off = sp.padded_layout(m, pad_factor)
    Up = gauge_project(sp.embed(w * Ua, pad, off), h)
    full[:, 1:-1, 1:-1, 1:-1] = sp.crop(Up, m, off)
    curl_err = fc.curl(full, h) - J
    dv = fc.div(full, h)
    ref = np.sqrt(np.sum(np.abs(J[:, valid]) ** 2))
    curl_res = float(np.sqrt(np.sum(curl_err[:, valid] ** 2)) / ref)
    div_res = float(np.sqrt(np.sum(dv[valid] ** 2)) / ref)
    return ConjugateResult(full, curl_res, div_res, compat_rel, valid)


def _dilate(mask):
    out = mask.copy()
    for ax in range(3):
        out |= np.roll(mask, 1, axis=ax) | np.roll(mask, -1, axis=ax)
    return out


def beltrami_residual(F, mu, h):
    """Pointwise magnitude of ``D F - mu D conj(F)`` (NaN on the outer layer)."""
    F = np.asarray(F)
    mu = np.asarray(mu)
    if mu.shape != F.shape[1:]:
        raise GridMismatch("F and mu must share a grid")
    r = fc.apply_D_left(F, h) - mu * fc.apply_D_left(cl.conj(F), h)
    return cl.norm(r)


def alessandrini_integrand_check(sigma1, sigma2, F1, F2, h):
    """Both integrands of the generalised Alessandrini identity, node by node.

    Returns ``(lhs, rhs)`` with ``lhs = (mu1 - mu2)/2 <D conj F1, D conj F2>``
    and ``rhs = (sigma2 - sigma1) grad u1 . grad u2`` where ``u_j = Sc F_j``.
    """
    s1, s2 = _sigma_array(sigma1), _sigma_array(sigma2)
    F1, F2 = np.asarray(F1), np.asarray(F2)
    if not (s1.shape == s2.shape == F1.shape[1:] == F2.shape[1:]):
        raise GridMismatch("conductivities and fields must share a grid")
    mu1, mu2 = sigma_to_mu(s1), sigma_to_mu(s2)
    DF1 = fc.apply_D_left(cl.conj(F1), h)
    DF2 = fc.apply_D_left(cl.conj(F2), h)
    lhs = 0.5 * (mu1 - mu2) * cl.inner(DF1, DF2)
    g1, g2 = fc.grad(cl.sc(F1), h), fc.grad(cl.sc(F2), h)
    rhs = (s2 - s1) * np.sum(g1 * g2, axis=0)
    return lhs, rhs


def alessandrini_exact_integrand(sigma1, sigma2, grad_u1, grad_u2):
    """Exact-derivative variant of :func:`alessandrini_integrand_check`.

    When ``F_j`` satisfies the Clifford-Beltrami equation, ``D conj F_j``
    equals ``(1 + sigma_j) grad u_j`` on (e0, e1, e2) with no e3 part, so no
    conjugate has to be computed.
    """
    s1, s2 = np.asarray(sigma1, dtype=float), np.asarray(sigma2, dtype=float)
    g1, g2 = np.asarray(grad_u1), np.asarray(grad_u2)
    zero = np.zeros_like(g1[0])
    DF1 = np.stack([(1 + s1) * g1[0], (1 + s1) * g1[1], (1 + s1) * g1[2], zero])
    DF2 = np.stack([(1 + s2) * g2[0], (1 + s2) * g2[1], (1 + s2) * g2[2], zero])
    lhs = 0.5 * (sigma_to_mu(s1) - sigma_to_mu(s2)) * cl.inner(DF1, DF2)
    rhs = (s2 - s1) * np.sum(g1 * g2, axis=0)
    return lhs, rhs


def _zeta_term(M, freq):
    """The scalar ``-M0 N + i M1 zeta1 + i M2 zeta2``."""
    return -M[0] * freq.normC + 1j * M[1] * freq.zeta1 + 1j * M[2] * freq.zeta2


def _bcast(c):
    return np.asarray(c).reshape(4, 1, 1, 1)


def cgo_reduced_residual(M, mu, freq, h):
    """R(M) such that ``D(EM) - mu D conj(EM) = Sc(E) R(M)``.

    ``R(M) = -conj(Z) (Dbar M) + 2 Sc(ZD) M - mu (D conj M) conj(Z)
    - 2 mu (-M0 N + i M1 zeta1 + i M2 zeta2) conj(Z)``.
    """
    M = np.asarray(M, dtype=complex)
    Z = make_Z(freq).coeffs
    Zb = _bcast(cl.conj(Z))
    return (
        -cl.mul(Zb, fc.apply_Dbar_left(M, h))
        + 2.0 * fc.sc_operator(_bcast(Z), M, h)
        - mu * cl.mul(fc.apply_D_left(cl.conj(M), h), Zb)
        - 2.0 * mu * _zeta_term(M, freq) * Zb
    )


def cgo_isolated_residual(M, mu, freq, h):
    """Residual of the CGO equation written with ``Dbar M`` isolated.

    Returns ``Dbar M`` minus
    ``-(mu/2) Z (D conj M) conj(Z) - 2 mu (-M0 N + i M1 zeta1 + i M2 zeta2)
    + Z Sc(ZD) M``.  Getting here from :func:`cgo_reduced_residual` would
    need an inverse of ``Z``, which does not exist (``Z`` is a zero
    divisor); ``conj(Z)/2`` stands in for it.
    """
    M = np.asarray(M, dtype=complex)
    Z = make_Z(freq).coeffs
    Zl, Zb = _bcast(Z), _bcast(cl.conj(Z))
    zeta_term = _zeta_term(M, freq)
    rhs = (
        -0.5 * mu * cl.mul(cl.mul(Zl, fc.apply_D_left(cl.conj(M), h)), Zb)
        - 2.0 * mu * np.stack([zeta_term, 0 * zeta_term, 0 * zeta_term, 0 * zeta_term])
        + cl.mul(Zl, fc.sc_operator(_bcast(Z), M, h))
    )
    return fc.apply_Dbar_left(M, h) - rhs


def cgo_substitution_lhs(E, M, mu, h):
    """``D(EM) - mu D conj(EM)`` with ``E M`` formed node by node."""
    EM = cl.mul(E, M)
    return fc.apply_D_left(EM, h) - mu * fc.apply_D_left(cl.conj(EM), h)
