"""Finite-difference conductivity solver on a cube-embedded ball and
Dirichlet-to-Neumann pairings in weak form.

The ball is a staircase node mask.  Unknowns sit at *interior* nodes;
Dirichlet data is imposed at *boundary* nodes, the outside neighbours of
interior nodes.  The 7-point operator uses harmonic-mean face
conductivities, and the DtN pairing is the discrete energy form of the
same operator, so the discrete Green identity holds exactly: the pairing
does not depend on how the first trace is extended inside.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spl

from .errors import DomainViolation, MaskMismatch, NonConvergence
from .fields import Grid3D, pairwise_sum

__all__ = [
    "EXTERIOR",
    "INTERIOR",
    "BOUNDARY",
    "Domain",
    "ball_grid",
    "ball_domain",
    "cube_domain",
    "extend_conductivity",
    "Multigrid",
    "cg",
    "solve_dirichlet",
    "energy_form",
    "DtnPairing",
    "dtn_pairing",
    "dtn_difference_pairing",
]

EXTERIOR, INTERIOR, BOUNDARY = 0, 1, 2


@dataclass(frozen=True)
class Domain:
    """Node classification of a grid into interior / boundary / exterior."""

    grid: Grid3D
    labels: np.ndarray = field(repr=False)
    radius: float = float("nan")

    def __post_init__(self):
        if self.labels.shape != self.grid.shape:
            raise MaskMismatch("label array does not match the grid")
        inner = self.labels == INTERIOR
        if np.any(inner[[0, -1], :, :]) or np.any(inner[:, [0, -1], :]) or np.any(inner[:, :, [0, -1]]):
            raise MaskMismatch("interior nodes may not touch the grid faces")
        ok = (self.labels == INTERIOR) | (self.labels == BOUNDARY)
        for ax in range(3):
            for s in (1, -1):
                if np.any(inner & ~np.roll(ok, s, axis=ax)):
                    raise MaskMismatch("an interior node has an exterior neighbour")

    @property
    def interior(self):
        return self.labels == INTERIOR

    @property
    def boundary(self):
        return self.labels == BOUNDARY

    @property
    def closure(self):
        return self.labels != EXTERIOR

    def _faces(self):
        # (flat index a, flat index b) for neighbour pairs with >= 1 interior end
        cached = getattr(self, "_face_cache", None)
        if cached is not None:
            return cached
        idx = np.arange(self.labels.size).reshape(self.labels.shape)
        inner = self.interior
        fa, fb = [], []
        for ax in range(3):
            lo = [slice(None)] * 3
            hi = [slice(None)] * 3
            lo[ax] = slice(None, -1)
            hi[ax] = slice(1, None)
            sel = inner[tuple(lo)] | inner[tuple(hi)]
            fa.append(idx[tuple(lo)][sel])
            fb.append(idx[tuple(hi)][sel])
        faces = (np.concatenate(fa), np.concatenate(fb))
        object.__setattr__(self, "_face_cache", faces)
        return faces


def ball_grid(n, radius=1.0, margin=2):
    """Cube grid of ``n**3`` nodes with ``margin`` spare layers around the ball."""
    h = 2.0 * radius / (n - 1 - 2 * margin)
    o = -radius - margin * h
    return Grid3D((n, n, n), h, (o, o, o))


def ball_domain(grid, radius=1.0):
    """Staircase ball: interior nodes have ``|x| < radius - h/4``.

    The quarter-cell inset makes the union of stencil faces cover the
    ball's volume to second order, instead of overshooting by about
    ``0.75 h / radius`` with the plain ``|x| < radius`` rule.
    """
    x = grid.coords()
    r = np.sqrt(np.sum(x * x, axis=0))
    inner = r < radius - 0.25 * grid.h
    near = np.zeros_like(inner)
    for ax in range(3):
        near |= np.roll(inner, 1, axis=ax) | np.roll(inner, -1, axis=ax)
    labels = np.full(grid.shape, EXTERIOR, dtype=np.int8)
    labels[near & ~inner] = BOUNDARY
    labels[inner] = INTERIOR
    return Domain(grid, labels, float(radius))


def cube_domain(grid):
    """Whole grid: the outer node layer is the boundary."""
    labels = np.full(grid.shape, BOUNDARY, dtype=np.int8)
    labels[1:-1, 1:-1, 1:-1] = INTERIOR
    return Domain(grid, labels)


def extend_conductivity(sigma, omega, domain):
    """Conductivity equal to ``sigma`` on the node mask ``omega`` and 1 elsewhere.

    Returns a full-grid array; the reduction to a ball with unit
    conductivity near its boundary requires ``omega`` to stay clear of the
    boundary nodes.
    """
    sigma = np.asarray(sigma, dtype=float)
    omega = np.asarray(omega, dtype=bool)
    if sigma.shape != domain.grid.shape or omega.shape != domain.grid.shape:
        raise MaskMismatch("sigma and omega must live on the domain grid")
    if np.any(omega & ~domain.closure):
        raise MaskMismatch("omega is not contained in the ball")
    out = np.where(omega, sigma, 1.0)
    if not np.all(out[domain.closure] > 0):
        raise DomainViolation("conductivity must be positive")
    return out


def _face_sigma(sigma, domain):
    a, b = domain._faces()
    s = np.asarray(sigma, dtype=float).ravel()
    sa, sb = s[a], s[b]
    if np.any(~(sa > 0)) or np.any(~(sb > 0)):
        raise DomainViolation("conductivity must be positive on the closed domain")
    return 2.0 * sa * sb / (sa + sb)


def _system(sigma, domain, face=None):
    """Return (A, B, interior flat indices, boundary flat indices).

    ``A`` is the SPD interior operator and ``B`` couples boundary values
    into the interior equations, so ``A u_I = -B f_B``.  ``face`` overrides
    the face conductivities computed from ``sigma``.
    """
    a, b = domain._faces()
    sf = _face_sigma(sigma, domain) if face is None else face
    n = domain.labels.size
    L = sps.coo_matrix(
        (np.concatenate([sf, sf, -sf, -sf]),
         (np.concatenate([a, b, a, b]), np.concatenate([a, b, b, a]))),
        shape=(n, n),
    ).tocsr()
    flat = domain.labels.ravel()
    I = np.flatnonzero(flat == INTERIOR)
    Bn = np.flatnonzero(flat == BOUNDARY)
    return L[I][:, I].tocsr(), L[I][:, Bn].tocsr(), I, Bn


def _coldot(X, Y, block=1024):
    """Column-wise dot products in a fixed order.

    Rows are accumulated sequentially within blocks (einsum never calls
    BLAS here) and the block partials go through the pairwise tree.
    """
    n = X.shape[0]
    nb = n // block
    cut = nb * block
    m = X.shape[1]
    parts = np.einsum("bij,bij->bj", X[:cut].reshape(nb, block, m), Y[:cut].reshape(nb, block, m))
    if cut < n:
        parts = np.concatenate([parts, np.einsum("ij,ij->j", X[cut:], Y[cut:])[None]])
    return pairwise_sum(parts, axis=0)


def _prolongation_1d(nf):
    """Linear interpolation from nodes ``0, 2, 4, ...`` onto ``0..nf-1``."""
    nc = (nf + 1) // 2
    entries = []
    for i in range(nf):
        if i % 2 == 0:
            entries.append((i, i // 2, 1.0))
        else:
            entries += [(i, j, 0.5) for j in ((i - 1) // 2, (i + 1) // 2) if j < nc]
    rows, cols, vals = zip(*entries)
    return sps.csr_matrix((vals, (rows, cols)), shape=(nf, nc))


class Multigrid:
    """Symmetric Galerkin V-cycle, usable as a CG preconditioner.

    ``A`` acts on the grid nodes listed in ``index`` (flat indices into a
    grid of ``shape``).  Coarse levels keep every other node per axis with
    trilinear transfer and ``P^T A P`` coarse operators; smoothing is
    ``nu`` damped-Jacobi sweeps before and after, and the coarsest level
    is factorised with SuperLU.
    """

    def __init__(self, A, shape, index, nu=1, omega=2.0 / 3.0, coarse_size=2000):
        self.nu = nu
        self.levels = []
        A = A.tocsr()
        while A.shape[0] > coarse_size and min(shape) > 4:
            p1 = [_prolongation_1d(n) for n in shape]
            full = sps.kron(p1[0], sps.kron(p1[1], p1[2], format="csr"), format="csr")[index]
            keep = np.flatnonzero(np.asarray(abs(full).sum(axis=0)).ravel() > 0)
            P = full[:, keep].tocsr()
            PT = P.T.tocsr()
            self.levels.append((A, (omega / A.diagonal())[:, None], P, PT))
            A = (PT @ A @ P).tocsr()
            shape = tuple((n + 1) // 2 for n in shape)
            index = keep
        self.coarse = spl.splu(A.tocsc())

    def __call__(self, R):
        return self._cycle(0, R)

    def _cycle(self, level, r):
        if level == len(self.levels):
            return np.ascontiguousarray(self.coarse.solve(r))
        A, wd, P, PT = self.levels[level]
        x = wd * r
        for _ in range(self.nu - 1):
            self._smooth(A, wd, r, x)
        t = A @ x
        np.subtract(r, t, out=t)
        x += P @ self._cycle(level + 1, PT @ t)
        for _ in range(self.nu):
            self._smooth(A, wd, r, x)
        return x

    @staticmethod
    def _smooth(A, wd, r, x):
        t = A @ x
        np.subtract(r, t, out=t)
        t *= wd
        x += t


def _preconditioner(kind, A, domain, index):
    if kind == "multigrid":
        return Multigrid(A, domain.grid.shape, index)
    return kind


def cg(A, b, tol=1e-10, maxiter=None, precondition=False, x0=None):
    """Conjugate gradients for SPD ``A`` and one or more right-hand sides.

    ``b`` may be 1-D or 2-D (one column per system).  Convergence is
    ``||r|| <= tol ||b||`` per column, on the unpreconditioned residual.
    ``precondition`` is False, True (Jacobi) or an SPD callable acting on
    column blocks, e.g. a :class:`Multigrid`.  Returns
    ``(x, iterations, residuals)``; raises :class:`NonConvergence` if any
    column misses the tolerance.
    """
    squeeze = b.ndim == 1
    B = b.reshape(len(b), -1).astype(float)
    n, m = B.shape
    if maxiter is None:
        maxiter = 50 * int(round(n ** (1 / 3))) + 100
    if callable(precondition):
        apply = precondition
    elif precondition:
        dinv = (1.0 / A.diagonal())[:, None]
        apply = lambda R: R * dinv  # noqa: E731
    else:
        apply = None
    X_out = np.zeros_like(B) if x0 is None else x0.reshape(n, -1).astype(float).copy()
    bnorm = np.sqrt(_coldot(B, B))
    bnorm[bnorm == 0] = 1.0
    R = B - A @ X_out
    res = np.sqrt(_coldot(R, R)) / bnorm
    # working arrays hold only the columns still iterating
    cols = np.flatnonzero(res > tol)
    X = X_out[:, cols]
    R = R[:, cols]
    Z = apply(R) if apply else R
    P = Z.copy()
    rz = _coldot(R, Z)
    it = 0
    while cols.size and it < maxiter:
        it += 1
        AP = A @ P
        alpha = rz / _coldot(P, AP)
        X += P * alpha
        R -= AP * alpha
        Z = apply(R) if apply else R
        rz_new = _coldot(R, Z)
        res[cols] = np.sqrt(_coldot(R, R)) / bnorm[cols]
        P *= rz_new / rz
        P += Z
        rz = rz_new
        done = res[cols] <= tol
        if np.any(done):
            X_out[:, cols[done]] = X[:, done]
            keep = ~done
            cols, X, R, P, rz = cols[keep], X[:, keep], R[:, keep], P[:, keep], rz[keep]
    if cols.size:
        X_out[:, cols] = X
        raise NonConvergence(it, float(res.max()))
    if squeeze:
        return X_out[:, 0], it, res
    return X_out, it, res


def _as_batch(f, shape):
    f = np.asarray(f)
    if f.shape[-3:] != shape:
        raise MaskMismatch(f"trace of shape {f.shape} does not match grid {shape}")
    return f.reshape((-1,) + shape), f.shape[:-3]


def solve_dirichlet(sigma, domain, f, tol=1e-10, maxiter=None, precondition=False, return_info=False):
    """Solve ``div(sigma grad u) = 0`` with ``u = f`` on the boundary nodes.

    ``f`` is a full-grid array (only boundary-node values are read) and may
    carry leading batch axes; complex traces are solved as two real
    problems.  Exterior nodes of the result are NaN.
    """
    shape = domain.grid.shape
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), shape)
    fb, lead = _as_batch(f, shape)
    is_complex = np.iscomplexobj(fb)
    A, B, I, Bn = _system(sigma, domain)
    vals = fb.reshape(fb.shape[0], -1)[:, Bn]
    if is_complex:
        vals = np.concatenate([vals.real, vals.imag])
    if not np.all(np.isfinite(vals)):
        raise DomainViolation("boundary values must be finite")
    rhs = -(B @ vals.T)
    M = _preconditioner(precondition, A, domain, I)
    X, it, res = cg(A, rhs, tol=tol, maxiter=maxiter, precondition=M)
    X = X.reshape(len(I), -1).T
    if is_complex:
        k = fb.shape[0]
        X = X[:k] + 1j * X[k:]
        vals = vals[:k] + 1j * vals[k:]
    out = np.full((fb.shape[0], domain.labels.size), np.nan, dtype=X.dtype)
    out[:, I] = X
    out[:, Bn] = vals
    out = out.reshape(lead + shape)
    if return_info:
        return out, {"iterations": it, "residual": float(np.max(res))}
    return out


def energy_form(sigma, domain, u, psi):
    """Discrete form ``a_sigma(u, psi)``, the weak-form integral of sigma grad u . grad psi.

    Sums over all stencil faces with at least one interior end; bilinear
    (no complex conjugation).  Leading batch axes of ``u`` and ``psi``
    broadcast.
    """
    shape = domain.grid.shape
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), shape)
    return _face_energy(_face_sigma(sigma, domain), domain, u, psi)


def _face_energy(sf, domain, u, psi):
    a, b = domain._faces()
    U = np.asarray(u).reshape(np.shape(u)[:-3] + (-1,))
    P = np.asarray(psi).reshape(np.shape(psi)[:-3] + (-1,))
    dens = sf * (U[..., a] - U[..., b]) * (P[..., a] - P[..., b])
    h = domain.grid.h
    if dens.ndim == 1:
        return pairwise_sum(dens) * h
    lead = dens.shape[:-1]
    flat = dens.reshape(-1, dens.shape[-1])
    return np.array([pairwise_sum(r) for r in flat]).reshape(lead) * h


@dataclass(frozen=True)
class DtnPairing:
    value: complex
    solver_residual: float


def harmonic_extension(domain, f, tol=1e-10, **kw):
    """Discrete harmonic (sigma = 1) extension of the boundary values of ``f``."""
    return solve_dirichlet(1.0, domain, f, tol=tol, **kw)


def dtn_pairing(sigma, domain, f1, f2, tol=1e-10, extension=None, **kw):
    """``<f1, Lambda_sigma f2>`` as the energy form of the sigma-solution for ``f2``.

    ``extension`` is any full-grid function agreeing with ``f1`` on the
    boundary nodes; by default the discrete harmonic extension is used.
    """
    u2, info = solve_dirichlet(sigma, domain, f2, tol=tol, return_info=True, **kw)
    psi = harmonic_extension(domain, f1, tol=tol, **kw) if extension is None else extension
    _check_extension(domain, psi, f1)
    val = energy_form(sigma, domain, u2, psi)
    return DtnPairing(val, info["residual"])


def _check_extension(domain, psi, f):
    bd = domain.boundary
    psi, f = np.asarray(psi), np.asarray(f)
    if not np.allclose(psi[..., bd], np.broadcast_to(f, psi.shape)[..., bd], rtol=1e-12, atol=0):
        raise MaskMismatch("extension does not match the trace on the boundary nodes")


def dtn_difference_pairing(sigma, delta, eps, domain, f1, f2, tol=1e-10, extension=None, **kw):
    """``(<f1, Lambda_{sigma + eps delta} f2> - <f1, Lambda_sigma f2>) / eps``.

    The same extension of ``f1`` is used in both pairings.  Batch axes of
    ``f1``/``f2`` are supported and must agree.

    Rather than solving for both potentials and subtracting two pairings
    of size O(1), the perturbed potential is written ``u + w``: ``w``
    vanishes on the boundary and solves the perturbed system with a source
    proportional to the face-conductivity change.  The quotient is then

        a_{dsf}(u, psi) / eps + a_{sigma + eps delta}(w, psi) / eps,

    which is algebraically identical but keeps the solver tolerance
    relative to the O(eps) change instead of to the pairings themselves.
    """
    shape = domain.grid.shape
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), shape)
    delta = np.asarray(delta, dtype=float)
    if not np.any(delta):
        f2 = np.asarray(f2)
        return np.zeros(f2.shape[:-3], dtype=np.result_type(f2, np.asarray(f1), float))[()]
    sig_eps = sigma + eps * delta
    if np.any(sig_eps[domain.closure] < 0.5 * np.min(sigma[domain.closure])):
        raise DomainViolation("sigma + eps delta drops below sigma0 / 2")
    if np.any(delta[domain.boundary] != 0):
        raise DomainViolation("delta must vanish on the boundary nodes")
    psi = harmonic_extension(domain, f1, tol=tol, **kw) if extension is None else extension
    _check_extension(domain, psi, f1)
    u = solve_dirichlet(sigma, domain, f2, tol=tol, **kw)
    sf = _face_sigma(sigma, domain)
    sf_eps = _face_sigma(sig_eps, domain)
    dsf = sf_eps - sf
    A_eps, _, I, _ = _system(sig_eps, domain, sf_eps)
    dA, dB, _, Bn = _system(None, domain, dsf)
    ub, lead = _as_batch(u, shape)
    flat = ub.reshape(ub.shape[0], -1)
    rows = np.concatenate([flat.real, flat.imag]) if np.iscomplexobj(flat) else flat
    rhs = -(dA @ rows[:, I].T + dB @ rows[:, Bn].T)
    kw_eps = dict(kw)
    kw_eps["precondition"] = _preconditioner(kw.get("precondition", False), A_eps, domain, I)
    W, _, _ = cg(A_eps, rhs, tol=tol, **kw_eps)
    W = W.reshape(len(I), -1).T
    if np.iscomplexobj(flat):
        k = flat.shape[0]
        W = W[:k] + 1j * W[k:]
    w = np.zeros((flat.shape[0], flat.shape[1]), dtype=W.dtype)
    w[:, I] = W
    w = w.reshape(lead + shape)
    return (_face_energy(dsf, domain, u, psi) + _face_energy(sf_eps, domain, w, psi)) / eps
