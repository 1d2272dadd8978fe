"""Linearised Calderon reconstruction at unit conductivity.

For a wavevector ``k = (k1, k2, k3)`` two frequencies ``a, b`` in C^2 are
chosen with ``a + b = (k1, k2)`` and ``|a|_C + |b|_C = i k3``.  The scalar
parts ``u1 = Sc E(., a)`` and ``u2 = Sc E(., b)`` are harmonic, their
product is the plane wave ``exp(i(x1 k1 + x2 k2 - x0 k3))`` and
``grad u1 . grad u2 = -|k|^2/2 u1 u2``.  Pairing the linearised DtN map
against these probes therefore samples the Fourier transform of the
perturbation, which is then inverted on a periodic lattice.

Coordinates: the probe formulas use "probe coordinates" ``y`` with
``y_j = x_{perm[j]}``.  The Fourier mode sampled in physical coordinates
is ``kappa`` with ``kappa[perm[0]] = -k3``, ``kappa[perm[1]] = k1``,
``kappa[perm[2]] = k2``, and the transform convention is
``delta_hat(kappa) = int delta(x) exp(i x . kappa) dx``.
"""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import forward as fw
from .errors import AsymmetricSpectrum, ProbeOverflow, ZeroWavevector
from .fields import integrate_interior, pairwise_sum
from .monogenic import Frequency

__all__ = [
    "ProbeParams",
    "probe_params",
    "probe_for_mode",
    "probe_traces",
    "probe_gradients",
    "fourier_sample_volume",
    "fourier_sample_dtn",
    "SpectrumGrid",
    "lattice",
    "sample_spectrum",
    "reconstruct",
    "fourier_coefficients",
    "band_limited",
    "recon_error",
]

PERMUTATIONS = tuple(itertools.permutations(range(3)))


@dataclass(frozen=True)
class ProbeParams:
    k: tuple
    a: tuple
    b: tuple
    normA: complex
    normB: complex
    axis_perm: tuple = (0, 1, 2)

    @property
    def freq_a(self):
        return Frequency.forced(self.a[0], self.a[1], self.normA)

    @property
    def freq_b(self):
        return Frequency.forced(self.b[0], self.b[1], self.normB)

    @property
    def prefactor(self):
        """|a|_C |b|_C - a . b (bilinear dot product)."""
        return self.normA * self.normB - (self.a[0] * self.b[0] + self.a[1] * self.b[1])

    @property
    def mode(self):
        """Physical Fourier mode kappa sampled by this probe pair."""
        k1, k2, k3 = self.k
        kappa = [0.0, 0.0, 0.0]
        p = self.axis_perm
        kappa[p[0]], kappa[p[1]], kappa[p[2]] = -k3, k1, k2
        return tuple(kappa)

    def growth_exponent(self, radius):
        """Largest real exponent of either probe over the ball of ``radius``."""
        worst = 0.0
        for z, n in ((self.a, self.normA), (self.b, self.normB)):
            # Re(i(y1 z1 + y2 z2) - y0 n) = -y1 Im z1 - y2 Im z2 - y0 Re n
            v = np.array([-np.real(n), -np.imag(z[0]), -np.imag(z[1])])
            worst = max(worst, radius * float(np.linalg.norm(v)))
        return worst


def probe_params(k, axis_perm=(0, 1, 2)):
    """Probe pair for wavevector ``k`` given in probe coordinates.

    Generic case: ``lam = |k|^2 / (2 (k1 + i k2))``, ``b = (lam, i lam)``,
    ``a = (k1, k2) - b``, ``|b|_C = 0`` and ``|a|_C = i k3``.  When
    ``k1 = k2 = 0``: ``a = -b = (0, i k3 / 2)`` with both norms ``i k3 / 2``.
    """
    k1, k2, k3 = (float(c) for c in k)
    if k1 == 0.0 and k2 == 0.0:
        if k3 == 0.0:
            raise ZeroWavevector("the zero wavevector has no probe pair")
        a = (0j, 0.5j * k3)
        b = (0j, -0.5j * k3)
        nA = nB = 0.5j * k3
    else:
        lam = (k1 * k1 + k2 * k2 + k3 * k3) / (2.0 * complex(k1, k2))
        b = (lam, 1j * lam)
        a = (k1 - lam, k2 - 1j * lam)
        nA, nB = 1j * k3, 0j
    return ProbeParams((k1, k2, k3), a, b, complex(nA), complex(nB), tuple(axis_perm))


def probe_for_mode(kappa, radius=1.0):
    """Probe pair sampling physical mode ``kappa``, with the permutation of
    least growth over the ball of ``radius``."""
    kappa = tuple(float(c) for c in kappa)
    best = None
    for perm in PERMUTATIONS:
        k = (kappa[perm[1]], kappa[perm[2]], -kappa[perm[0]])
        p = probe_params(k, perm)
        g = p.growth_exponent(radius)
        if best is None or g < best[0] - 1e-12:
            best = (g, p)
    return best[1]


def _probe_coords(x, perm):
    x = np.asarray(x, dtype=float)
    return np.stack([x[perm[0]], x[perm[1]], x[perm[2]]])


def _sc_exp(y, z, n):
    return np.exp(1j * (y[1] * z[0] + y[2] * z[1]) - y[0] * n)


def probe_traces(p, x, exp_cap=12.0, radius=None):
    """``(u1, u2, growth)`` sampled at physical points ``x``.

    ``growth`` is the largest real exponent reached on the sample points;
    :class:`ProbeOverflow` is raised if it exceeds ``exp_cap``.
    """
    y = _probe_coords(x, p.axis_perm)
    e1 = 1j * (y[1] * p.a[0] + y[2] * p.a[1]) - y[0] * p.normA
    e2 = 1j * (y[1] * p.b[0] + y[2] * p.b[1]) - y[0] * p.normB
    growth = float(max(np.max(np.abs(e1.real)), np.max(np.abs(e2.real))))
    if growth > exp_cap:
        raise ProbeOverflow(f"probe exponent {growth:.2f} exceeds cap {exp_cap}")
    return np.exp(e1), np.exp(e2), growth


def probe_gradients(p, x):
    """Analytic physical-coordinate gradients of both probes at ``x``.

    In probe coordinates ``grad u = u (-|z|_C, i z1, i z2)``; the result is
    permuted back to the physical axes.
    """
    u1, u2, _ = probe_traces(p, x, exp_cap=np.inf)
    perm = p.axis_perm

    def phys(u, z, n):
        g = np.empty((3,) + u.shape, dtype=complex)
        g[perm[0]] = -n * u
        g[perm[1]] = 1j * z[0] * u
        g[perm[2]] = 1j * z[1] * u
        return g

    return phys(u1, p.a, p.normA), phys(u2, p.b, p.normB)


def fourier_sample_volume(delta, grid, p, support=None, depth=1):
    """``int delta grad u1 . grad u2 dx`` with analytic probe gradients.

    Without ``support`` the trapezoidal interior rule of
    :func:`integrate_interior` is used.  ``support`` is a node mask outside
    which ``delta`` vanishes and which keeps ``depth`` layers clear of the
    grid faces; the sum then runs over those nodes only (same value, less
    work).
    """
    if support is None:
        x = grid.coords()
        g1, g2 = probe_gradients(p, x)
        return complex(integrate_interior(delta * np.sum(g1 * g2, axis=0), grid.h, depth))
    x = grid.coords()[:, support]
    g1, g2 = probe_gradients(p, x)
    dens = np.asarray(delta)[support] * np.sum(g1 * g2, axis=0)
    return complex(pairwise_sum(dens) * grid.h**3)


def fourier_sample_dtn(delta, eps, domain, probes, tol=1e-10, exp_cap=12.0, batch=64, **kw):
    """Linearised-DtN samples ``(<f1, (L_{1+eps delta} - L_1) f2>) / eps`` for each probe.

    ``probes`` is a sequence of :class:`ProbeParams`.  Each complex trace is
    solved as two real problems; all right-hand sides for one conductivity
    are solved together in blocks of ``batch`` probes.  The analytic probe
    ``u1`` serves as the extension of ``f1`` (the pairing is extension
    independent).  Returns a complex array, one entry per probe.
    """
    closure = domain.closure
    x = domain.grid.coords()[:, closure]
    out = np.empty(len(probes), dtype=complex)
    shape = domain.grid.shape
    for start in range(0, len(probes), batch):
        chunk = probes[start:start + batch]
        f1 = np.zeros((len(chunk),) + shape, dtype=complex)
        f2 = np.zeros_like(f1)
        for j, p in enumerate(chunk):
            u1, u2, _ = probe_traces(p, x, exp_cap=exp_cap)
            f1[j][closure], f2[j][closure] = u1, u2
        out[start:start + len(chunk)] = fw.dtn_difference_pairing(
            1.0, delta, eps, domain, f1, f2, tol=tol, extension=f1, **kw
        )
    return out


@dataclass
class SpectrumGrid:
    """Samples of ``delta_hat`` on the lattice ``(2 pi / L) {-K..K}^3``.

    ``samples[i, j, l]`` belongs to the mode with integer index
    ``(i - K, j - K, l - K)``.  ``known`` marks measured entries; the DC
    entry and dropped modes are unknown.
    """

    K: int
    L: float
    samples: np.ndarray
    known: np.ndarray = field(default=None)
    cond: np.ndarray = field(default=None)

    def __post_init__(self):
        n = 2 * self.K + 1
        if self.samples.shape != (n, n, n):
            raise ValueError("spectrum array has the wrong shape")
        if self.known is None:
            self.known = np.ones(self.samples.shape, dtype=bool)
        if self.cond is None:
            self.cond = np.zeros(self.samples.shape)

    @property
    def dropped(self):
        m = ~self.known
        m[self.K, self.K, self.K] = False
        return int(np.sum(m))

    def modes(self):
        return lattice(self.K, self.L)

    def check_symmetry(self, rtol=1e-8):
        s = np.where(self.known, self.samples, 0)
        mirror = np.conj(s[::-1, ::-1, ::-1])
        if not np.array_equal(self.known, self.known[::-1, ::-1, ::-1]):
            raise AsymmetricSpectrum("known-sample pattern is not symmetric under k -> -k")
        scale = max(np.max(np.abs(s)), 1e-300)
        if np.max(np.abs(s - mirror)) > rtol * scale:
            raise AsymmetricSpectrum("samples violate delta_hat(-k) = conj(delta_hat(k))")


def lattice(K, L):
    """Wavevectors ``(2 pi / L) * (i, j, l)`` for ``i, j, l`` in ``-K..K``; shape (3, n, n, n)."""
    m = np.arange(-K, K + 1)
    return (2.0 * np.pi / L) * np.stack(np.meshgrid(m, m, m, indexing="ij"))


def sample_spectrum(delta, domain, K, L, route="volume", eps=1e-3, tol=1e-10,
                    exp_cap=12.0, threads=1, batch=64, **solver_kw):
    """Measure ``delta_hat`` on half the lattice and fill the rest by conjugate symmetry.

    ``solver_kw`` (``maxiter``, ``precondition``) goes to the CG solves of
    the DtN route.  Returns ``(SpectrumGrid, rows)`` where ``rows`` lists
    ``(k1, k2, k3, Re, Im, route, cond)`` for the measured half.
    """
    n = 2 * K + 1
    kap = lattice(K, L)
    samples = np.zeros((n, n, n), dtype=complex)
    known = np.zeros((n, n, n), dtype=bool)
    cond = np.zeros((n, n, n))
    radius = domain.radius if np.isfinite(domain.radius) else 1.0
    # a probe must be representable on the boundary nodes, which sit up to h outside
    reach = radius + domain.grid.h
    todo = []
    for idx in itertools.product(range(n), repeat=3):
        rel = tuple(i - K for i in idx)
        if rel == (0, 0, 0) or rel < (0, 0, 0):
            continue
        p = probe_for_mode(kap[(slice(None),) + idx], radius)
        g = p.growth_exponent(reach)
        if g > exp_cap:
            cond[idx] = g
            continue
        todo.append((idx, p, g))
    if route == "volume":
        grid = domain.grid
        support = domain.closure
        if np.any(np.asarray(delta)[~support] != 0):
            raise ValueError("delta must vanish outside the ball")

        def one(item):
            return fourier_sample_volume(delta, grid, item[1], support=support)

        if threads > 1:
            with ThreadPoolExecutor(threads) as pool:
                vals = list(pool.map(one, todo))
        else:
            vals = [one(t) for t in todo]
    elif route == "dtn":
        vals = list(fourier_sample_dtn(delta, eps, domain, [t[1] for t in todo],
                                       tol=tol, exp_cap=np.inf, batch=batch, **solver_kw))
    else:
        raise ValueError(f"unknown route {route!r}")
    rows = []
    for (idx, p, g), v in zip(todo, vals):
        dh = v / p.prefactor
        mirror = tuple(2 * K - i for i in idx)
        samples[idx], samples[mirror] = dh, np.conj(dh)
        known[idx] = known[mirror] = True
        cond[idx] = cond[mirror] = g
        k = kap[(slice(None),) + idx]
        rows.append((float(k[0]), float(k[1]), float(k[2]), float(dh.real), float(dh.imag), route, g))
    return SpectrumGrid(K, L, samples, known, cond), rows


def _fill_unknown(spec):
    """Fill DC from its measured lattice neighbours; dropped modes become 0."""
    s = spec.samples.copy()
    known = spec.known.copy()
    K = spec.K
    c = (K, K, K)
    nbrs = []
    for ax in range(3):
        for d in (-1, 1):
            q = list(c)
            q[ax] += d
            nbrs.append(tuple(q))
    vals = [s[q] for q in nbrs if known[q]]
    s[c] = np.mean(vals).real if vals else 0.0
    known[c] = True
    s[~known] = 0.0
    return s


def _axis_phases(grid, K, L, sign):
    m = np.arange(-K, K + 1)
    return [np.exp(sign * 1j * (2.0 * np.pi / L) * np.outer(m, grid.axis(j))) for j in range(3)]


def reconstruct(spec, grid, check=True):
    """Fourier-series inversion ``(1/L^3) sum delta_hat(kappa) exp(-i kappa . x)`` on ``grid``.

    The DC entry is replaced by the mean of its six lattice neighbours and
    dropped modes contribute zero.
    """
    if check:
        spec.check_symmetry()
    s = _fill_unknown(spec)
    p0, p1, p2 = _axis_phases(grid, spec.K, spec.L, -1.0)
    out = np.einsum("abc,ai,bj,ck->ijk", s, p0, p1, p2, optimize=True)
    return out.real / spec.L**3


def fourier_coefficients(f, grid, K, L, depth=1):
    """``int f(x) exp(i kappa . x) dx`` over the grid interior for every lattice mode."""
    from .fields import _trapezoid_weights, interior

    fi = interior(np.asarray(f, dtype=float), depth)
    ws = [_trapezoid_weights(n) for n in fi.shape]
    ph = _axis_phases(grid, K, L, 1.0)
    ph = [p[:, depth:-depth] * w for p, w in zip(ph, ws)] if depth else [p * w for p, w in zip(ph, ws)]
    return np.einsum("ijk,ai,bj,ck->abc", fi, ph[0], ph[1], ph[2], optimize=True) * grid.h**3


def band_limited(f, grid, K, L):
    """Projection of ``f`` onto the lattice modes, evaluated on ``grid``."""
    coef = fourier_coefficients(f, grid, K, L)
    p0, p1, p2 = _axis_phases(grid, K, L, -1.0)
    return np.einsum("abc,ai,bj,ck->ijk", coef, p0, p1, p2, optimize=True).real / L**3


def recon_error(delta_true, delta_rec, grid, K, L, band_limit=True, depth=1):
    """Relative L2 error of ``delta_rec`` against the K-band-limited ``delta_true``."""
    ref = band_limited(delta_true, grid, K, L) if band_limit else np.asarray(delta_true)
    num = integrate_interior(np.abs(delta_rec - ref) ** 2, grid.h, depth)
    den = integrate_interior(np.abs(ref) ** 2, grid.h, depth)
    if den == 0:
        return 0.0 if num == 0 else float("inf")
    return float(np.sqrt(num / den))
