"""Uniform node-centred grids and finite-difference calculus for scalar,
vector and Clifford-valued fields.

Fields are plain numpy arrays whose last three axes run over the grid
nodes; any leading axes are components (4 for Clifford fields, 3 for
vector fields).  Derivatives use second-order central differences and are
only defined one layer away from the faces: nodes where a stencil would
leave the grid are filled with NaN so that composite operators shrink
their valid region automatically.  Norms and integrals take an explicit
``depth`` saying how many outer layers to strip.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import clifford as cl
from .errors import GridMismatch, GridTooSmall

__all__ = [
    "Grid3D",
    "interior",
    "partial_fd",
    "grad",
    "div",
    "curl",
    "apply_D",
    "apply_D_left",
    "apply_D_right",
    "apply_Dbar_left",
    "apply_Dbar_right",
    "laplacian",
    "grad_curl_decompose",
    "assemble_F",
    "split_F",
    "sc_operator",
    "leibniz_residual",
    "pairwise_sum",
    "integrate_interior",
    "l2_norm",
    "max_norm",
    "box_mask",
    "masked_norms",
    "order_estimate",
]


@dataclass(frozen=True)
class Grid3D:
    """Uniform grid with ``shape`` nodes, spacing ``h`` and node (0,0,0) at ``origin``."""

    shape: tuple
    h: float
    origin: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        shape = tuple(int(n) for n in self.shape)
        if len(shape) != 3:
            raise ValueError("a 3D grid needs three node counts")
        if min(shape) < 5:
            raise GridTooSmall(f"grid needs at least 5 nodes per axis, got {shape}")
        if not self.h > 0:
            raise ValueError("grid spacing must be positive")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "h", float(self.h))
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))

    @classmethod
    def cube(cls, n, lo=-1.0, hi=1.0):
        """``n**3`` nodes spanning ``[lo, hi]**3`` including both ends."""
        h = (hi - lo) / (n - 1)
        return cls((n, n, n), h, (lo, lo, lo))

    def axis(self, j):
        return self.origin[j] + self.h * np.arange(self.shape[j])

    def coords(self):
        """Node coordinates as an array of shape ``(3, n0, n1, n2)``."""
        return np.stack(np.meshgrid(self.axis(0), self.axis(1), self.axis(2), indexing="ij"))

    def check(self, *fields):
        for f in fields:
            if np.shape(f)[-3:] != self.shape:
                raise GridMismatch(f"field of shape {np.shape(f)} does not live on grid {self.shape}")


def interior(a, depth=1):
    """View of ``a`` with ``depth`` layers stripped from every face."""
    if depth == 0:
        return a
    s = slice(depth, -depth)
    return a[..., s, s, s]


def _check_axis_len(f, axis_len):
    if axis_len < 3:
        raise GridTooSmall(f"central differences need at least 3 nodes along an axis, got {axis_len}")


def partial_fd(f, axis, h):
    """Central difference ``(f(x + h e_axis) - f(x - h e_axis)) / (2h)``.

    ``axis`` counts spatial axes 0..2 (the trailing three array axes).
    Face nodes along ``axis`` are NaN.
    """
    f = np.asarray(f)
    ax = f.ndim - 3 + axis
    n = f.shape[ax]
    _check_axis_len(f, n)
    dtype = np.result_type(f.dtype, float)
    out = np.full(f.shape, np.nan, dtype=dtype)
    hi = [slice(None)] * f.ndim
    lo = [slice(None)] * f.ndim
    mid = [slice(None)] * f.ndim
    hi[ax] = slice(2, None)
    lo[ax] = slice(None, -2)
    mid[ax] = slice(1, -1)
    out[tuple(mid)] = (f[tuple(hi)] - f[tuple(lo)]) / (2.0 * h)
    return out


def grad(u, h):
    return np.stack([partial_fd(u, j, h) for j in range(3)])


def div(U, h):
    return partial_fd(U[0], 0, h) + partial_fd(U[1], 1, h) + partial_fd(U[2], 2, h)


def curl(U, h):
    """curl in (x0, x1, x2) coordinates."""
    d = lambda c, j: partial_fd(U[c], j, h)  # noqa: E731
    return np.stack([d(2, 1) - d(1, 2), d(0, 2) - d(2, 0), d(1, 0) - d(0, 1)])


_BASIS = [cl.basis(j) for j in range(3)]


def _const(c, ndim):
    return np.asarray(c).reshape((4,) + (1,) * ndim)


def apply_D(F, h, side="left", bar=False):
    """Discrete Cauchy-Riemann operator acting on a Clifford field.

    ``D = d0 + e1 d1 + e2 d2`` and ``Dbar = d0 - e1 d1 - e2 d2``; ``side``
    selects whether the basis elements multiply from the left or right.
    """
    F = np.asarray(F)
    if F.shape[0] != 4 or F.ndim != 4:
        raise ValueError("expected a Clifford field of shape (4, n0, n1, n2)")
    out = partial_fd(F, 0, h)
    sign = -1.0 if bar else 1.0
    for j in (1, 2):
        dF = partial_fd(F, j, h)
        ej = _const(_BASIS[j], 3)
        term = cl.mul(ej, dF) if side == "left" else cl.mul(dF, ej)
        out = out + sign * term
    return out


def apply_D_left(F, h):
    return apply_D(F, h, "left", False)


def apply_D_right(F, h):
    return apply_D(F, h, "right", False)


def apply_Dbar_left(F, h):
    return apply_D(F, h, "left", True)


def apply_Dbar_right(F, h):
    return apply_D(F, h, "right", True)


def laplacian(f, h):
    """7-point Laplacian on the trailing three axes; outer layer is NaN."""
    f = np.asarray(f)
    dtype = np.result_type(f.dtype, float)
    out = np.full(f.shape, np.nan, dtype=dtype)
    c = interior(f, 1)
    acc = -6.0 * c
    for ax in range(3):
        axis = f.ndim - 3 + ax
        for shift in (0, 2):
            sl = [slice(None)] * f.ndim
            for k in range(3):
                a = f.ndim - 3 + k
                sl[a] = slice(shift, f.shape[a] - 2 + shift) if a == axis else slice(1, -1)
            acc = acc + f[tuple(sl)]
    out[..., 1:-1, 1:-1, 1:-1] = acc / h**2
    return out


def grad_curl_decompose(F, h):
    """Return ``G = (D conj F + D F)/2`` and ``C = (D conj F - D F)/2``.

    For ``F = assemble_F(u, U)``, ``G`` carries grad u on (e0, e1, e2) and
    ``C`` carries curl U on (e0, e1, e2) and div U on e3.
    """
    DF = apply_D_left(F, h)
    DFb = apply_D_left(cl.conj(F), h)
    return 0.5 * (DFb + DF), 0.5 * (DFb - DF)


def assemble_F(u, U):
    """Clifford field ``u e0 + U2 e1 - U1 e2 - U0 e3`` from a potential and triplet.

    The scalar slot holds the potential ``u``; the triplet ``U = (U0, U1,
    U2)`` is the one whose curl is sigma grad u.  Expanding ``D F`` and
    ``D conj F`` component by component shows this is the assignment for
    which the half-sum is ``grad u`` and the half-difference is
    ``curl U + div U e3``.
    """
    u = np.asarray(u)
    U = np.asarray(U)
    if U.shape != (3,) + u.shape:
        raise GridMismatch(f"potential {u.shape} and triplet {U.shape} are on different grids")
    return np.stack([u, U[2], -U[1], -U[0]])


def split_F(F):
    """Inverse of :func:`assemble_F`: returns ``(u, U)``."""
    F = np.asarray(F)
    return F[0], np.stack([-F[3], -F[2], F[1]])


def sc_operator(f, g, h):
    """The scalar operator ``Sc(f D) g = f0 d0 g - f1 d1 g - f2 d2 g``."""
    f = np.asarray(f)
    return (
        f[0] * partial_fd(g, 0, h)
        - f[1] * partial_fd(g, 1, h)
        - f[2] * partial_fd(g, 2, h)
    )


def leibniz_residual(f, g, h):
    """``D(fg) - [(Df) g - conj(f) (Dbar g) + 2 Sc(fD) g]`` with FD derivatives."""
    lhs = apply_D_left(cl.mul(f, g), h)
    rhs = (
        cl.mul(apply_D_left(f, h), g)
        - cl.mul(cl.conj(f), apply_Dbar_left(g, h))
        + 2.0 * sc_operator(f, g, h)
    )
    return lhs - rhs


def pairwise_sum(values, axis=None, block=64):
    """Sum with a fixed reduction tree.

    With ``axis=None`` the input is flattened; with ``axis=0`` every column
    is reduced by the same tree.  Terms are summed in contiguous blocks of
    ``block`` and the block sums are then combined pairwise.  The order of
    additions depends only on the number of terms, so results are
    bit-identical across runs and thread counts.
    """
    v = np.asarray(values)
    if axis is None:
        v = v.ravel()
    elif axis != 0:
        v = np.moveaxis(v, axis, 0)
    n = v.shape[0]
    if n == 0:
        return np.zeros(v.shape[1:], dtype=v.dtype)[()]
    nb = -(-n // block)
    pad = nb * block - n
    if pad:
        v = np.concatenate([v, np.zeros((pad,) + v.shape[1:], dtype=v.dtype)])
    v = v.reshape((nb, block) + v.shape[1:]).sum(axis=1)
    while v.shape[0] > 1:
        m = v.shape[0]
        paired = v[0 : m - 1 : 2] + v[1::2]
        v = np.concatenate([paired, v[m - 1 :]]) if m % 2 else paired
    return v[0]


def _trapezoid_weights(n):
    w = np.ones(n)
    w[0] = w[-1] = 0.5
    return w


def integrate_interior(f, h, depth=1):
    """Trapezoidal integral over the box spanned by the nodes ``depth`` layers in.

    Component axes (if any) are integrated separately.
    """
    f = interior(np.asarray(f), depth)
    n0, n1, n2 = f.shape[-3:]
    w = (
        _trapezoid_weights(n0)[:, None, None]
        * _trapezoid_weights(n1)[None, :, None]
        * _trapezoid_weights(n2)[None, None, :]
    )
    wf = f * w
    if f.ndim == 3:
        return pairwise_sum(wf) * h**3
    lead = f.shape[:-3]
    flat = wf.reshape((-1,) + f.shape[-3:])
    return np.array([pairwise_sum(c) * h**3 for c in flat]).reshape(lead)


def l2_norm(f, h, depth=1):
    """Discrete L2 norm over the interior region, summing over components."""
    f = np.asarray(f)
    sq = np.abs(f) ** 2
    if f.ndim > 3:
        sq = sq.reshape((-1,) + f.shape[-3:]).sum(axis=0)
    return float(np.sqrt(integrate_interior(sq, h, depth)))


def max_norm(f, depth=1):
    """Largest pointwise magnitude (Euclidean over components) in the interior."""
    f = interior(np.asarray(f), depth)
    if f.ndim > 3:
        mag = np.sqrt(np.sum(np.abs(f.reshape((-1,) + f.shape[-3:])) ** 2, axis=0))
    else:
        mag = np.abs(f)
    return float(np.max(mag))


def box_mask(grid, half_width):
    """Nodes with ``|x_j| <= half_width`` for every axis.

    Comparing errors on a fixed physical box, rather than a fixed number of
    layers in from the faces, keeps refinement studies like-for-like.
    """
    x = grid.coords()
    return np.all(np.abs(x) <= half_width * (1 + 1e-12), axis=0)


def masked_norms(f, mask, h):
    """``(L2, max)`` of ``f`` over the nodes in ``mask`` (components summed)."""
    f = np.asarray(f)
    sq = np.abs(f) ** 2
    if f.ndim > 3:
        sq = sq.reshape((-1,) + f.shape[-3:]).sum(axis=0)
    v = sq[mask]
    if not np.all(np.isfinite(v)):
        raise GridMismatch("field is undefined on part of the requested region")
    return float(np.sqrt(pairwise_sum(v) * h**3)), float(np.sqrt(v.max()))


def order_estimate(err_coarse, err_fine, h_coarse, h_fine):
    """Observed convergence order from errors at two spacings."""
    return float(np.log(err_coarse / err_fine) / np.log(h_coarse / h_fine))
