"""Self-checking experiments behind the command-line runner.

Every ``run_*`` function takes a flat config dict and a numpy Generator
and returns an :class:`Outcome`: a list of :class:`Check` rows, a
summary dict, optional extra CSV tables and optional grid dumps.  Nothing
here touches the file system.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import beltrami as bt
from . import clifford as cl
from . import fields as fc
from . import forward as fw
from . import linrecon as lr
from . import monogenic as mg
from . import spectral as sp
from .errors import NotInvertible
from .fields import Grid3D


@dataclass
class Check:
    """One report row.  ``tol=None`` marks an informational row."""

    name: str
    identity: str
    grid: int
    h: float
    value: float
    tol: float | None = None
    lower: float | None = None

    @property
    def passed(self):
        if self.tol is None and self.lower is None:
            return None
        v = self.value
        if not math.isfinite(v):
            return False
        if self.lower is not None and v < self.lower:
            return False
        return self.tol is None or v <= self.tol

    def row(self):
        status = {None: "info", True: "pass", False: "fail"}[self.passed]
        tol = "" if self.tol is None else self.tol
        lower = "" if self.lower is None else self.lower
        return [self.name, self.identity, self.grid, self.h, self.value, lower, tol, status]


REPORT_HEADER = ["check", "identity", "grid", "h", "value", "lower", "upper", "status"]


@dataclass
class Outcome:
    checks: list
    summary: dict
    tables: dict = field(default_factory=dict)  # name -> (header, rows)
    grids: dict = field(default_factory=dict)  # name -> (array, Grid3D, kind)

    @property
    def passed(self):
        return all(c.passed is not False for c in self.checks)


def _order_check(name, identity, e_coarse, e_fine, g_coarse, g_fine, lo, hi):
    p = fc.order_estimate(e_coarse, e_fine, g_coarse.h, g_fine.h)
    return Check(name, identity, g_fine.shape[0], g_fine.h, p, hi, lo)


def refinement_pair(n):
    """Grids of n and 2n nodes per axis with spacing exactly halved, covering [-1, 1)."""
    return Grid3D((n,) * 3, 2.0 / n, (-1.0,) * 3), Grid3D((2 * n,) * 3, 1.0 / n, (-1.0,) * 3)


# ----------------------------------------------------------------------------
# algebra


def _rel(err, scale):
    return float(np.max(err / np.maximum(scale, 1e-300)))


def run_verify_algebra(cfg, rng):
    n = int(cfg["n_cases"])
    tol = float(cfg["algebra_rtol"])
    A, B, C = (rng.standard_normal((3, 4, n)))
    Ac = rng.standard_normal((4, n)) + 1j * rng.standard_normal((4, n))
    Bc = rng.standard_normal((4, n)) + 1j * rng.standard_normal((4, n))
    Cc = rng.standard_normal((4, n)) + 1j * rng.standard_normal((4, n))
    nA, nB, nC = cl.norm(A), cl.norm(B), cl.norm(C)
    checks = []

    def add(name, tag, value, t=tol):
        checks.append(Check(name, tag, n, 0.0, float(value), t))

    err = cl.norm(cl.mul(cl.mul(A, B), C) - cl.mul(A, cl.mul(B, C)))
    add("associativity (real)", "clifford.associativity", _rel(err, nA * nB * nC))
    nAc, nBc, nCc = cl.norm(Ac), cl.norm(Bc), cl.norm(Cc)
    err = cl.norm(cl.mul(cl.mul(Ac, Bc), Cc) - cl.mul(Ac, cl.mul(Bc, Cc)))
    add("associativity (complex)", "clifford.associativity", _rel(err, nAc * nBc * nCc))
    err = cl.norm(cl.conj(cl.mul(A, B)) - cl.mul(cl.conj(B), cl.conj(A)))
    add("conj(AB) = conj(B) conj(A) (real)", "clifford.anti_automorphism", _rel(err, nA * nB))
    err = cl.norm(cl.conj(cl.mul(Ac, Bc)) - cl.mul(cl.conj(Bc), cl.conj(Ac)))
    add("conj(AB) = conj(B) conj(A) (complex)", "clifford.anti_automorphism", _rel(err, nAc * nBc))
    err = cl.norm(cl.conj(cl.conj(Ac)) - Ac)
    add("conj(conj(A)) = A", "clifford.involution", _rel(err, nAc))
    table = 0.0
    e = [cl.basis(j) for j in range(4)]
    for i, j in itertools.product((1, 2), repeat=2):
        expect = -2.0 * e[0] if i == j else np.zeros(4)
        table = max(table, float(np.max(np.abs(cl.mul(e[i], e[j]) + cl.mul(e[j], e[i]) - expect))))
    table = max(table, float(np.max(np.abs(cl.mul(e[1], e[2]) - e[3]))))
    table = max(table, float(np.max(np.abs(cl.mul(e[3], e[3]) + e[0]))))
    add("e_i e_j + e_j e_i = -2 delta_ij, e1 e2 = e3", "clifford.anticommutation", table, 0.0)
    err = np.abs(cl.norm(cl.mul(A, B)) - nA * nB)
    add("|AB| = |A| |B| (real)", "clifford.norm_multiplicative", _rel(err, nA * nB))
    qa, qb = cl.quadratic_form(Ac), cl.quadratic_form(Bc)
    err = np.abs(cl.quadratic_form(cl.mul(Ac, Bc)) - qa * qb)
    add("Q(AB) = Q(A) Q(B) (complex)", "clifford.quadratic_form", _rel(err, nAc**2 * nBc**2))
    inv = cl.try_inverse(Ac)
    err = cl.norm(cl.mul(Ac, inv) - e[0][:, None])
    add("A A^-1 = 1 (complex)", "clifford.inverse", _rel(err, nAc * cl.norm(inv)))
    z = np.array([1.0, 1j, 0.0, 0.0])
    try:
        cl.try_inverse(z)
        refused = 0.0
    except NotInvertible:
        refused = 1.0
    checks.append(Check("e0 + i e1 rejected as zero divisor", "clifford.zero_divisor", 1, 0.0, refused, None, 1.0))
    summary = {"n_cases": n, "rtol": tol}
    return Outcome(checks, summary)


# ----------------------------------------------------------------------------
# field calculus


class TrigField:
    """Sum of a few ``amp * sin(omega . x + phase)`` terms per component."""

    def __init__(self, rng, ncomp, terms=2, scale=1.5, complex_=False):
        self.omega = rng.uniform(-scale, scale, (ncomp, terms, 3))
        self.phase = rng.uniform(0, 2 * np.pi, (ncomp, terms))
        amp = rng.uniform(0.5, 1.0, (ncomp, terms))
        if complex_:
            amp = amp * np.exp(1j * rng.uniform(0, 2 * np.pi, (ncomp, terms)))
        self.amp = amp

    def _arg(self, x):
        return np.einsum("ctj,j...->ct...", self.omega, x) + self.phase[(...,) + (None,) * (x.ndim - 1)]

    def _a(self, x):
        return self.amp[(...,) + (None,) * (x.ndim - 1)]

    def value(self, x):
        return np.sum(self._a(x) * np.sin(self._arg(x)), axis=1)

    def grad(self, x):
        """Shape ``(ncomp, 3, ...)``."""
        c = self._a(x) * np.cos(self._arg(x))
        return np.einsum("ctj,ct...->cj...", self.omega, c)

    def laplacian(self, x):
        w2 = np.sum(self.omega**2, axis=-1)[(...,) + (None,) * (x.ndim - 1)]
        return -np.sum(w2 * self._a(x) * np.sin(self._arg(x)), axis=1)


def _random_frequency(rng, max_norm=3.0, min_n=0.5):
    while True:
        z = rng.uniform(-2.0, 2.0, 2) + 1j * rng.uniform(-1.5, 1.5, 2)
        f = mg.Frequency.principal(z[0], z[1])
        if np.sqrt(np.sum(np.abs(z) ** 2)) <= max_norm and abs(f.normC) >= min_n:
            return f


def run_verify_operators(cfg, rng):
    n = int(cfg["grid_n"])
    lo, hi = float(cfg["order_lo"]), float(cfg["order_hi"])
    half = float(cfg["box_half_width"])
    gc, gf = refinement_pair(n)
    F = TrigField(rng, 4)
    f, g = TrigField(rng, 4), TrigField(rng, 4)
    u, U = TrigField(rng, 1), TrigField(rng, 3)
    checks = []
    errs = {}
    for grid in (gc, gf):
        x = grid.coords()
        h = grid.h
        box = fc.box_mask(grid, half)
        Fx, lapF = F.value(x), F.laplacian(x)
        dd = fc.apply_D_left(fc.apply_Dbar_left(Fx, h), h)
        dbd = fc.apply_Dbar_left(fc.apply_D_left(Fx, h), h)
        r_dd = fc.masked_norms(dd - lapF, box, h)
        r_dbd = fc.masked_norms(dbd - lapF, box, h)
        r_lap = fc.masked_norms(fc.laplacian(Fx, h) - lapF, box, h)
        r_leib = fc.masked_norms(fc.leibniz_residual(f.value(x), g.value(x), h), box, h)
        ux, Ux = u.value(x)[0], U.value(x)
        gu, gU = u.grad(x)[0], U.grad(x)
        curlU = np.stack([gU[2, 1] - gU[1, 2], gU[0, 2] - gU[2, 0], gU[1, 0] - gU[0, 1]])
        divU = gU[0, 0] + gU[1, 1] + gU[2, 2]
        G, C = fc.grad_curl_decompose(fc.assemble_F(ux, Ux), h)
        zero = np.zeros_like(ux)
        r_G = fc.masked_norms(G - np.stack([gu[0], gu[1], gu[2], zero]), box, h)
        r_C = fc.masked_norms(C - np.stack([curlU[0], curlU[1], curlU[2], divU]), box, h)
        errs[grid.shape[0]] = dict(dd=r_dd, dbd=r_dbd, lap=r_lap, leib=r_leib, G=r_G, C=r_C)
    labels = {
        "dd": ("D Dbar = Laplacian", "operators.d_dbar_laplacian"),
        "dbd": ("Dbar D = Laplacian", "operators.dbar_d_laplacian"),
        "lap": ("7-point Laplacian", "operators.laplacian"),
        "leib": ("Leibniz rule for D(fg)", "operators.leibniz"),
        "G": ("(D conj F + D F)/2 = grad u", "operators.decomposition_grad"),
        "C": ("(D conj F - D F)/2 = curl U + div U e3", "operators.decomposition_curl"),
    }
    ec, ef = errs[gc.shape[0]], errs[gf.shape[0]]
    for key, (name, tag) in labels.items():
        checks.append(Check(name + " L2 residual", tag, gc.shape[0], gc.h, ec[key][0]))
        checks.append(Check(name + " L2 residual", tag, gf.shape[0], gf.h, ef[key][0]))
        checks.append(_order_check(name + " order", tag, ec[key][0], ef[key][0], gc, gf, lo, hi))

    mono_tol = float(cfg["mono_tol"])
    ident_tol = float(cfg["identity_tol"])
    worst_ident = 0.0
    for trial in range(int(cfg["n_frequencies"])):
        freq = _random_frequency(rng)
        res = {}
        for grid in (gc, gf):
            x = grid.coords()
            h = grid.h
            box = fc.box_mask(grid, half)
            E = mg.eval_E(x, freq)
            E1 = mg.eval_E1(x, freq)
            nE, nE1 = fc.masked_norms(E, box, h)[0], fc.masked_norms(E1, box, h)[0]
            ScE = mg.eval_ScE(x, freq)
            res[grid.shape[0]] = {
                "E_left": fc.masked_norms(fc.apply_D_left(E, h), box, h)[0] / nE,
                "E_right": fc.masked_norms(fc.apply_D_right(E, h), box, h)[0] / nE,
                "E1_left": fc.masked_norms(fc.apply_D_left(E1, h), box, h)[0] / nE1,
                "E1_right": fc.masked_norms(fc.apply_D_right(E1, h), box, h)[0] / nE1,
                "ScE_harmonic": fc.masked_norms(fc.laplacian(ScE, h), box, h)[0]
                / fc.masked_norms(ScE, box, h)[0],
            }
        for key, val in res[gf.shape[0]].items():
            tag = "monogenic." + key.lower()
            tol = mono_tol if key != "ScE_harmonic" else None
            checks.append(Check(f"zeta #{trial} {key} relative residual", tag, gf.shape[0], gf.h, val, tol))
            checks.append(_order_check(f"zeta #{trial} {key} order", tag, res[gc.shape[0]][key], val, gc, gf, lo, hi))
        worst_ident = max(worst_ident, _exp_identities(rng, freq))
    checks.append(Check("E addition formula, E = E1 - E2, E2 = -(i zeta/N) E1, branch flip",
                        "monogenic.identities", 0, 0.0, worst_ident, ident_tol))
    summary = {"grids": [gc.shape[0], gf.shape[0]], "box_half_width": half}
    return Outcome(checks, summary)


def _exp_identities(rng, freq, m=200):
    """Largest relative violation of the closed-form E identities at random points."""
    x = rng.uniform(-1, 1, (3, m))
    y = rng.uniform(-1, 1, (3, m))
    E1x, E1y, E1xy = mg.eval_E1(x, freq), mg.eval_E1(y, freq), mg.eval_E1(x + y, freq)
    scale = cl.norm(E1x) * cl.norm(E1y)
    worst = _rel(cl.norm(cl.mul(E1x, E1y) - E1xy), scale)
    E, E2 = mg.eval_E(x, freq), mg.eval_E2(x, freq)
    worst = max(worst, _rel(cl.norm(E - (E1x - E2)), cl.norm(E1x) + cl.norm(E2)))
    w = -1j * freq.zeta_hat() / freq.normC
    worst = max(worst, _rel(cl.norm(E2 - cl.mul(w[:, None], E1x)), cl.norm(E2)))
    flip = freq.flipped()
    worst = max(worst, _rel(cl.norm(mg.eval_E1(x, flip) - E1x), cl.norm(E1x)))
    worst = max(worst, _rel(cl.norm(mg.eval_E2(x, flip) + E2), cl.norm(E2)))
    worst = max(worst, _rel(cl.norm(mg.eval_E1(x, -freq) - mg.eval_E1(-x, freq)), cl.norm(E1x)))
    return worst


# ----------------------------------------------------------------------------
# Beltrami system


def layered_profile(amp=0.5, rate=3.0):
    """``s(x0) = 1 + amp tanh(rate x0)`` and its antiderivative."""

    def s(t):
        return 1.0 + amp * np.tanh(rate * t)

    def S(t):
        return t + amp * np.log(np.cosh(rate * t)) / rate

    return s, S


def manufactured_triple(x, h, alpha=1.0, beta=0.5, amp=0.5, rate=3.0):
    """``(sigma, u, U, disc)`` with ``curl U = sigma grad u`` and ``div U = 0`` exactly.

    ``sigma = s(x0)``, ``u = alpha x1 + beta x1 x2`` and
    ``U = (0, beta S x1, -beta S x2 - alpha S)`` with ``S' = s``.  Central
    differences are exact on u and on the x1, x2 derivatives of U; along x0
    they turn s into ``s + e`` with ``e = (S(x0+h) - S(x0-h))/(2h) - s``
    (about ``h^2 s''/6``).  ``disc = (1 + mu) |e| |grad u|`` is therefore the
    exact node-wise Beltrami residual of the sampled triple.
    """
    s, S = layered_profile(amp, rate)
    x0, x1, x2 = x
    sig = s(x0)
    u = alpha * x1 + beta * x1 * x2
    Sx = S(x0)
    U = np.stack([np.zeros_like(u), beta * Sx * x1, -beta * Sx * x2 - alpha * Sx])
    mu = (1 - sig) / (1 + sig)
    e = (S(x0 + h) - S(x0 - h)) / (2 * h) - sig
    disc = (1 + mu) * np.abs(e) * np.sqrt((beta * x2 + alpha) ** 2 + (beta * x1) ** 2)
    return sig, u, U, disc


def _gaussian_potential(x, w):
    """Compact-ish div-free field ``U* = curl(0, 0, phi)`` and ``J = curl U*`` for a Gaussian phi."""
    phi = np.exp(-np.sum(x * x, axis=0) / (2 * w * w))
    d = lambda i: -x[i] / w**2 * phi  # noqa: E731
    dd = lambda i, j: (x[i] * x[j] / w**4 - (i == j) / w**2) * phi  # noqa: E731
    Ustar = np.stack([d(1), -d(0), np.zeros_like(phi)])
    J = np.stack([dd(0, 2), dd(1, 2), -dd(0, 0) - dd(1, 1)])
    return Ustar, J


def run_conjugate(cfg, rng):
    n = int(cfg["grid_n"])
    checks = []
    s = rng.uniform(0.2, 5.0, 1000)
    inv = bt.mu_to_sigma(bt.sigma_to_mu(s.reshape(10, 10, 10))).sigma.ravel()
    checks.append(Check("mu_to_sigma(sigma_to_mu(s)) = s", "beltrami.transform_inverse", 1000, 0.0,
                        float(np.max(np.abs(inv - s) / s)), 1e-14))

    grid = Grid3D.cube(n, -1.0, 1.0)
    x, h = grid.coords(), grid.h
    # manufactured triple: both directions of the equivalence
    sig, u, U, bound = manufactured_triple(x, h)
    mu = bt.sigma_to_mu(sig)
    F = fc.assemble_F(u, U)
    r7 = fc.apply_D_left(F, h) - mu * fc.apply_D_left(cl.conj(F), h)
    excess = fc.interior(cl.norm(r7) - bound, 1)
    checks.append(Check("Beltrami residual minus discretisation term (manufactured conjugate)",
                        "beltrami.equivalence_forward", n, h, float(np.max(excess)), 1e-6))
    G, C = fc.grad_curl_decompose(F, h)
    r8 = C - sig * G
    conv = fc.interior(cl.norm(r8 + r7 / (1 + mu)), 1)
    scale = fc.interior(cl.norm(r7) + 1e-300, 1)
    checks.append(Check("curl/div residual = -(Beltrami residual)/(1+mu), manufactured",
                        "beltrami.equivalence_converse", n, h, float(np.max(conv) / max(np.max(scale), 1e-300)), 1e-12))
    # converse on a field that is far from a solution
    P = TrigField(rng, 4).value(x)
    r7p = fc.apply_D_left(P, h) - mu * fc.apply_D_left(cl.conj(P), h)
    Gp, Cp = fc.grad_curl_decompose(P, h)
    conv = fc.interior(cl.norm((Cp - sig * Gp) + r7p / (1 + mu)), 1)
    checks.append(Check("curl/div residual = -(Beltrami residual)/(1+mu), arbitrary F",
                        "beltrami.equivalence_converse", n, h,
                        float(np.max(conv) / np.max(fc.interior(cl.norm(r7p), 1))), 1e-12))

    # numerical conjugate of the manufactured potential
    tol_c = float(cfg["conjugate_tol"])
    res = bt.conjugate_solve(sig, u, h)
    checks.append(Check("conjugate_solve curl residual (layered sigma)", "beltrami.conjugate_curl", n, h,
                        res.curl_residual, tol_c))
    checks.append(Check("conjugate_solve div residual (layered sigma)", "beltrami.conjugate_div", n, h,
                        res.div_residual, tol_c))
    Fn = fc.assemble_F(u, np.nan_to_num(res.U))
    rb = bt.beltrami_residual(Fn, mu, h)
    ref = cl.norm(fc.apply_D_left(Fn, h))
    val = res.valid & fc.interior(np.ones(grid.shape, bool), 0)
    val = val & ~np.isnan(rb)
    checks.append(Check("Beltrami residual of the numerical conjugate (relative)", "beltrami.residual", n, h,
                        float(np.sqrt(np.sum(rb[val] ** 2) / np.sum(ref[val] ** 2))), tol_c))
    # unit conductivity, u = x1
    res1 = bt.conjugate_solve(np.ones(grid.shape), x[1], h)
    checks.append(Check("sigma = 1, u = x1: curl residual", "beltrami.conjugate_curl", n, h,
                        res1.curl_residual, 0.05))
    res0 = bt.conjugate_solve(np.ones(grid.shape), np.full(grid.shape, 2.0), h)
    checks.append(Check("sigma = 1, u = const: |U|", "beltrami.conjugate_const", n, h,
                        float(np.nanmax(np.abs(res0.U))), 0.0))
    # spectral vector potential of a manufactured div-free field
    Ustar, J = _gaussian_potential(x, 0.15)
    Uv = bt.vector_potential(J, h)
    err = np.sqrt(np.sum((Uv - Ustar) ** 2) / np.sum(Ustar**2))
    checks.append(Check("vector potential recovers manufactured U*", "beltrami.vector_potential", n, h,
                        float(err), 1e-6))
    # gauge projection of a pure gradient
    psi = np.exp(-np.sum(x * x, axis=0) / (2 * 0.2**2))
    kv = sp.wavenumbers(grid.shape, h)
    V = sp.ifftn3(1j * kv * sp.fftn3(psi)).real
    W = bt.gauge_project(V, h)
    checks.append(Check("gauge projection of a gradient leaves |W|/|V|", "beltrami.gauge_project", n, h,
                        float(np.sqrt(np.sum(W**2) / np.sum(V**2))), 1e-8))
    summary = {
        "grid_n": n,
        "curl_residual": res.curl_residual,
        "div_residual": res.div_residual,
        "compat_residual": res.compat_residual,
    }
    grids = {"conjugate_U": (np.nan_to_num(res.U), grid, "vector")}
    return Outcome(checks, summary, grids=grids)


def smooth_bump(x, rho=0.6, amp=1.0):
    """``amp * exp(1 - 1/(1 - r^2/rho^2))`` inside ``r < rho`` and 0 outside."""
    r2 = np.sum(x * x, axis=0) / rho**2
    inside = r2 < 1
    out = np.zeros_like(r2)
    out[inside] = amp * np.exp(1.0 - 1.0 / (1.0 - r2[inside]))
    return out


def alessandrini_pointwise(rng, m=2000):
    """Largest relative gap between the two integrands with analytic gradients."""
    x = rng.uniform(-1, 1, (3, m))
    s1f, s2f = TrigField(rng, 1), TrigField(rng, 1)
    s1 = 2.0 + s1f.value(x)[0]
    s2 = 2.0 + 0.8 * s2f.value(x)[0]
    g1, g2 = TrigField(rng, 1).grad(x)[0], TrigField(rng, 1).grad(x)[0]
    lhs, rhs = bt.alessandrini_exact_integrand(s1, s2, g1, g2)
    scale = np.abs(s2 - s1) * np.sqrt(np.sum(g1**2, 0) * np.sum(g2**2, 0)) + 1e-300
    return float(np.max(np.abs(lhs - rhs) / scale))


def run_alessandrini(cfg, rng):
    checks = []
    checks.append(Check("pointwise identity, analytic gradients", "alessandrini.pointwise", 0, 0.0,
                        alessandrini_pointwise(rng), 1e-12))
    # finite-difference variant on manufactured conjugates
    lo, hi = float(cfg["order_lo"]), float(cfg["order_hi"])
    gaps = []
    gc, gf = refinement_pair(int(cfg["fd_grid_n"]))
    for grid in (gc, gf):
        x, h = grid.coords(), grid.h
        s1, u1, U1, _ = manufactured_triple(x, h, 1.0, 0.5, 0.5, 3.0)
        s2, u2, U2, _ = manufactured_triple(x, h, -0.7, 0.8, -0.3, 2.0)
        lhs, rhs = bt.alessandrini_integrand_check(s1, s2, fc.assemble_F(u1, U1), fc.assemble_F(u2, U2), h)
        box = fc.box_mask(grid, float(cfg["box_half_width"]))
        gaps.append(fc.masked_norms(lhs - rhs, box, h)[0] / fc.masked_norms(rhs, box, h)[0])
    checks.append(Check("FD integrands relative gap", "alessandrini.fd", gf.shape[0], gf.h, gaps[1]))
    checks.append(_order_check("FD integrands gap order", "alessandrini.fd", gaps[0], gaps[1], gc, gf, lo, hi))

    # boundary pairings against the volume integral
    n = int(cfg["grid_n"])
    radius = float(cfg["ball_radius"])
    grid = fw.ball_grid(n, radius)
    dom = fw.ball_domain(grid, radius)
    x, h = grid.coords(), grid.h
    tol = float(cfg["cg_tol"])
    kw = _cg_kw(cfg)
    bump = smooth_bump(x, 0.6 * radius, float(cfg["bump_amplitude"]))
    sigma1 = np.ones(grid.shape)
    sigma2 = fw.extend_conductivity(1.0 + bump, dom.interior, dom)
    f1 = x[1] + 0.3 * x[0]
    f2 = x[0] ** 2 - x[2] ** 2 + 0.5 * x[1]
    p1 = fw.dtn_pairing(sigma1, dom, f1, f2, tol=tol, extension=f1, **kw)
    p2 = fw.dtn_pairing(sigma2, dom, f1, f2, tol=tol, extension=f1, **kw)
    lhs = p2.value - p1.value
    u1 = fw.solve_dirichlet(sigma1, dom, f1, tol=tol, **kw)
    u2 = fw.solve_dirichlet(sigma2, dom, f2, tol=tol, **kw)
    g1 = np.nan_to_num(fc.grad(np.nan_to_num(u1), h))
    g2 = np.nan_to_num(fc.grad(np.nan_to_num(u2), h))
    dens = (sigma2 - sigma1) * np.sum(g1 * g2, axis=0)
    vol = float(fc.integrate_interior(dens, h))
    rel = abs(lhs - vol) / abs(vol)
    checks.append(Check("<f1,(L2 - L1) f2> vs volume integral", "alessandrini.boundary_pairing", n, h,
                        rel, float(cfg["pairing_rtol"])))
    gl, gr = bt.alessandrini_exact_integrand(sigma1, sigma2, g1, g2)
    gen = float(fc.integrate_interior(gl, h))
    checks.append(Check("Clifford form of the volume integral", "alessandrini.clifford_form", n, h,
                        abs(gen - vol) / abs(vol), 1e-12))
    sym = fw.dtn_pairing(sigma2, dom, f2, f1, tol=tol, extension=f2, **kw)
    checks.append(Check("pairing symmetry", "dtn.symmetry", n, h,
                        abs(sym.value - p2.value) / abs(p2.value), 10 * tol))
    summary = {"grid_n": n, "pairing_difference": lhs, "volume_integral": vol, "relative_gap": rel}
    return Outcome(checks, summary)


# ----------------------------------------------------------------------------
# CGO substitution


def _random_poly_M(rng, x, degree=2):
    """Clifford field whose components are random complex polynomials of total degree <= 2."""
    monos = [e for e in itertools.product(range(degree + 1), repeat=3) if sum(e) <= degree]
    coef = rng.standard_normal((4, len(monos))) + 1j * rng.standard_normal((4, len(monos)))
    comps = []
    for c in range(4):
        v = np.zeros(x.shape[1:], dtype=complex)
        for a, e in zip(coef[c], monos):
            v = v + a * x[0] ** e[0] * x[1] ** e[1] * x[2] ** e[2]
        comps.append(v)
    return np.stack(comps)


def _random_mu(rng, x):
    m0 = rng.uniform(-0.25, 0.25)
    m1 = rng.uniform(-0.2, 0.2)
    w = rng.uniform(-1.5, 1.5, 3)
    return m0 + m1 * np.sin(np.einsum("j,j...->...", w, x) + rng.uniform(0, 2 * np.pi))


def run_cgo_residual(cfg, rng):
    lo, hi = float(cfg["order_lo"]), float(cfg["order_hi"])
    half = float(cfg["box_half_width"])
    gc, gf = refinement_pair(int(cfg["grid_n"]))
    checks, rows = [], []
    for trial in range(int(cfg["n_trials"])):
        freq = _random_frequency(rng)
        st = rng.bit_generator.state
        errs = []
        for grid in (gc, gf):
            rng.bit_generator.state = st  # same M and mu on both grids
            x, h = grid.coords(), grid.h
            M = _random_poly_M(rng, x)
            mu = _random_mu(rng, x)
            E = mg.eval_E(x, freq)
            lhs = bt.cgo_substitution_lhs(E, M, mu, h)
            R = bt.cgo_reduced_residual(M, mu, freq, h)
            rhs = mg.eval_ScE(x, freq) * R
            box = fc.box_mask(grid, half)
            errs.append(fc.masked_norms(lhs - rhs, box, h)[0] / fc.masked_norms(lhs, box, h)[0])
            if grid is gf:
                P = bt.cgo_isolated_residual(M, mu, freq, h)
                nR, nP = fc.masked_norms(R, box, h)[0], fc.masked_norms(P, box, h)[0]
                nD = fc.masked_norms(R - P, box, h)[0]
                rows.append([trial, freq.zeta1.real, freq.zeta1.imag, freq.zeta2.real, freq.zeta2.imag,
                             nR, nP, nD / max(nR, nP)])
        checks.append(Check(f"trial {trial}: CGO substitution relative defect", "cgo.identity_a", gf.shape[0], gf.h, errs[1]))
        checks.append(_order_check(f"trial {trial}: CGO substitution order", "cgo.identity_a", errs[0], errs[1], gc, gf, lo, hi))
        checks.append(Check(f"trial {trial}: reduced vs alternative residual gap", "cgo.form_discrepancy",
                            gf.shape[0], gf.h, rows[-1][-1]))
    # constant M sanity rows
    x, h = gc.coords(), gc.h
    freq = _random_frequency(rng)
    M = np.zeros((4,) + gc.shape, dtype=complex)
    M[0] = 1.0
    mu = 0.3
    R = bt.cgo_reduced_residual(M, mu, freq, h)
    want = 2 * mu * freq.normC * cl.conj(mg.make_Z(freq).coeffs)
    gap = float(np.nanmax(cl.norm(R - want[:, None, None, None])))
    checks.append(Check("M = e0: R = 2 mu N conj(Z)", "cgo.constant_M", gc.shape[0], h, gap, 1e-12))
    header = ["trial", "zeta1_re", "zeta1_im", "zeta2_re", "zeta2_im", "norm_reduced", "norm_alternative", "relative_gap"]
    summary = {"grids": [gc.shape[0], gf.shape[0]], "n_trials": int(cfg["n_trials"])}
    return Outcome(checks, summary, tables={"discrepancy.csv": (header, rows)})


# ----------------------------------------------------------------------------
# linearised reconstruction


PRECONDITIONERS = {"none": False, "jacobi": True, "multigrid": "multigrid"}


def _cg_kw(cfg):
    kw = {"precondition": PRECONDITIONERS[cfg["cg_precondition"]]}
    mi = int(cfg["cg_maxiter"])
    if mi > 0:
        kw["maxiter"] = mi
    return kw


def gaussian_delta(x, amp=0.1, width=0.2):
    return amp * np.exp(-np.sum(x * x, axis=0) / (2 * width**2))


def probe_invariant_gap(rng, m=1000):
    """Worst relative violation of the probe-pair invariants over random wavevectors."""
    worst = 0.0
    ks = [rng.standard_normal(3) for _ in range(m)]
    ks = [k / np.linalg.norm(k) * rng.uniform(0.1, 20.0) for k in ks]
    ks.append(np.array([0.0, 0.0, 1.7]))
    for k in ks:
        for perm in lr.PERMUTATIONS:
            p = lr.probe_params(k, perm)
            s = np.linalg.norm(k)
            worst = max(worst,
                        abs(p.a[0] + p.b[0] - k[0]) / s,
                        abs(p.a[1] + p.b[1] - k[1]) / s,
                        abs(p.normA + p.normB - 1j * k[2]) / s,
                        abs(p.normA**2 - (p.a[0] ** 2 + p.a[1] ** 2)) / s**2,
                        abs(p.normB**2 - (p.b[0] ** 2 + p.b[1] ** 2)) / s**2,
                        abs(p.prefactor + 0.5 * s * s) / (0.5 * s * s))
    return worst


def run_linrecon(cfg, rng, delta=None):
    K = int(cfg["K"])
    L = float(cfg["L"])
    n = int(cfg["grid_n"])
    radius = float(cfg["ball_radius"])
    route = cfg["route"]
    if K < 1:
        raise ValueError("K must be at least 1")
    if route not in ("volume", "dtn", "both"):
        raise ValueError(f"unknown route {route!r}")
    grid = fw.ball_grid(n, radius)
    dom = fw.ball_domain(grid, radius)
    x = grid.coords()
    if delta is None:
        delta = gaussian_delta(x, float(cfg["amplitude"]), float(cfg["width"]))
    delta = np.where(dom.interior, delta, 0.0)
    checks = [Check("probe invariants over random k", "probes.invariants", 0, 0.0, probe_invariant_gap(rng), 1e-10)]
    routes = ["volume", "dtn"] if route == "both" else [route]
    summary = {"K": K, "L": L, "eps": float(cfg["epsilon"]), "grid_n": n}
    tables, grids = {}, {}
    rows_all = []
    errors = {}
    for r in routes:
        spec, rows = lr.sample_spectrum(
            delta, dom, K, L, route=r, eps=float(cfg["epsilon"]), tol=float(cfg["cg_tol"]),
            exp_cap=float(cfg[f"exp_cap_{r}"]), threads=int(cfg["threads"]), batch=int(cfg["batch"]),
            **_cg_kw(cfg),
        )
        rows_all.extend(rows)
        rec = lr.reconstruct(spec, grid)
        err = lr.recon_error(delta, rec, grid, K, L)
        errors[r] = err
        summary[r] = {"error_L2_rel": err, "dropped_k_count": spec.dropped, "measured": len(rows)}
        grids[f"delta_rec_{r}"] = (rec, grid, "scalar")
        tol = float(cfg["recon_tol"]) if r == "volume" else float(cfg["recon_tol_dtn"])
        checks.append(Check(f"{r} route relative L2 error", f"linrecon.{r}", n, grid.h, err, tol))
    if "volume" in errors and "dtn" in errors:
        checks.append(Check("dtn error minus volume error", "linrecon.dtn_vs_volume", n, grid.h,
                            errors["dtn"] - errors["volume"], float(cfg["dtn_margin"])))
    main = routes[-1] if len(routes) == 1 else "dtn"
    summary["error_L2_rel"] = errors[main]
    summary["dropped_k_count"] = summary[main]["dropped_k_count"]
    summary["route"] = route
    tables["spectrum.csv"] = (["k1", "k2", "k3", "Re", "Im", "route", "cond"], rows_all)
    return Outcome(checks, summary, tables=tables, grids=grids)


COMMANDS = {
    "verify-algebra": run_verify_algebra,
    "verify-operators": run_verify_operators,
    "conjugate": run_conjugate,
    "alessandrini": run_alessandrini,
    "cgo-residual": run_cgo_residual,
    "linrecon": run_linrecon,
}
