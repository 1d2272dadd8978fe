import numpy as np
import pytest
from scipy.special import erf

from calderon_lab import clifford as cl
from calderon_lab import fields as fc
from calderon_lab.errors import GridMismatch, GridTooSmall
from calderon_lab.fields import Grid3D


@pytest.fixture
def grid():
    return Grid3D.cube(11, -1.0, 1.0)


def scalar_field(c, u):
    return np.asarray(c).reshape(4, 1, 1, 1) * u


def test_grid_validation():
    with pytest.raises(GridTooSmall):
        Grid3D((4, 8, 8), 0.1)
    g = Grid3D.cube(5)
    assert g.coords().shape == (3, 5, 5, 5)
    with pytest.raises(GridMismatch):
        g.check(np.zeros((5, 5, 4)))


def test_partial_exact_on_low_degree(grid):
    x = grid.coords()
    d = fc.partial_fd(x[1], 1, grid.h)
    assert np.all(np.isnan(d[:, 0, :])) and np.all(np.isnan(d[:, -1, :]))
    np.testing.assert_allclose(d[:, 1:-1, :], 1.0, atol=1e-13)
    d0 = fc.partial_fd(x[0] ** 2, 0, grid.h)
    np.testing.assert_allclose(d0[1:-1], 2 * x[0][1:-1], atol=1e-13)


def test_partial_order_two():
    errs = []
    for n in (17, 33):
        g = Grid3D.cube(n, 0.0, 2.0)
        x = g.coords()
        d = fc.partial_fd(np.sin(x[2]), 2, g.h)
        errs.append(np.nanmax(np.abs(d - np.cos(x[2]))))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)


def test_partial_needs_three_nodes():
    with pytest.raises(GridTooSmall):
        fc.partial_fd(np.zeros((2, 5, 5)), 0, 0.1)


def test_D_examples(grid):
    x = grid.coords()
    h = grid.h
    sl = (slice(None),) + (slice(1, -1),) * 3
    F = scalar_field(cl.basis(0), x[0])
    np.testing.assert_allclose(fc.apply_D_left(F, h)[sl], scalar_field(cl.basis(0), np.ones_like(x[0]))[sl], atol=1e-13)
    F = scalar_field(cl.basis(0), x[1])
    want = scalar_field(cl.basis(1), np.ones_like(x[0]))[sl]
    np.testing.assert_allclose(fc.apply_D_left(F, h)[sl], want, atol=1e-13)
    np.testing.assert_allclose(fc.apply_D_right(F, h)[sl], want, atol=1e-13)


def test_D_e0_component_formula(grid):
    rng = np.random.default_rng(0)
    F = rng.standard_normal((4,) + grid.shape)
    h = grid.h
    d = lambda c, j: fc.partial_fd(F[c], j, h)  # noqa: E731
    want = d(0, 0) - d(1, 1) - d(2, 2)
    np.testing.assert_allclose(fc.apply_D_left(F, h)[0], want, atol=1e-12)


def test_left_right_agree_on_scalar_fields(grid):
    rng = np.random.default_rng(1)
    F = np.zeros((4,) + grid.shape)
    F[0] = rng.standard_normal(grid.shape)
    np.testing.assert_array_equal(fc.apply_D_left(F, grid.h), fc.apply_D_right(F, grid.h))


def test_laplacian_exact_on_quadratics(grid):
    x = grid.coords()
    lap = fc.laplacian(x[0] ** 2 + x[1] ** 2, grid.h)
    np.testing.assert_allclose(lap[1:-1, 1:-1, 1:-1], 4.0, atol=1e-11)
    lap = fc.laplacian(x[0] ** 2 - x[1] ** 2, grid.h)
    np.testing.assert_allclose(lap[1:-1, 1:-1, 1:-1], 0.0, atol=1e-11)
    assert np.all(np.isnan(lap[0]))


def test_decomposition_examples(grid):
    x = grid.coords()
    h = grid.h
    inner = (slice(None),) + (slice(2, -2),) * 3
    zero = np.zeros(grid.shape)
    G, C = fc.grad_curl_decompose(scalar_field(cl.basis(0), x[1]), h)
    np.testing.assert_allclose(G[inner], scalar_field(cl.basis(1), np.ones(grid.shape))[inner], atol=1e-12)
    np.testing.assert_allclose(C[inner], 0.0, atol=1e-12)
    _, C = fc.grad_curl_decompose(fc.assemble_F(zero, np.stack([zero, zero, x[1]])), h)
    np.testing.assert_allclose(C[inner], scalar_field(cl.basis(0), np.ones(grid.shape))[inner], atol=1e-12)
    _, C = fc.grad_curl_decompose(fc.assemble_F(zero, np.stack([x[0], zero, zero])), h)
    np.testing.assert_allclose(C[inner], scalar_field(cl.basis(3), np.ones(grid.shape))[inner], atol=1e-12)


def test_decomposition_matches_fd_gradient_and_divergence(grid):
    rng = np.random.default_rng(2)
    u = rng.standard_normal(grid.shape)
    U = rng.standard_normal((3,) + grid.shape)
    h = grid.h
    G, C = fc.grad_curl_decompose(fc.assemble_F(u, U), h)
    core = (slice(None),) + (slice(1, -1),) * 3
    np.testing.assert_array_equal(G[3][core[1:]], 0.0)
    np.testing.assert_allclose(G[:3][core], fc.grad(u, h)[core], atol=1e-12)
    np.testing.assert_allclose(C[3][core[1:]], fc.div(U, h)[core[1:]], atol=1e-12)
    np.testing.assert_allclose(C[:3][core], fc.curl(U, h)[core], atol=1e-12)


def test_assemble_F_examples():
    o = np.ones((5, 5, 5))
    z = 0 * o
    F = fc.assemble_F(o, np.stack([z, z, z]))
    np.testing.assert_array_equal(F, scalar_field(cl.basis(0), o))
    F = fc.assemble_F(z, np.stack([o, z, z]))
    np.testing.assert_array_equal(F, scalar_field(-cl.basis(3), o))
    u = np.random.default_rng(0).standard_normal((5, 5, 5))
    U = np.random.default_rng(1).standard_normal((3, 5, 5, 5))
    F = fc.assemble_F(u, U)
    np.testing.assert_array_equal(cl.sc(F), u)
    u2, U2 = fc.split_F(F)
    np.testing.assert_array_equal(u2, u)
    np.testing.assert_array_equal(U2, U)
    with pytest.raises(GridMismatch):
        fc.assemble_F(u, U[:, :4])


def test_leibniz_examples(grid):
    x = grid.coords()
    h = grid.h
    f = scalar_field(cl.basis(0), x[0])
    g = scalar_field(cl.basis(1), np.ones(grid.shape))
    r = fc.leibniz_residual(f, g, h)
    np.testing.assert_allclose(r[(slice(None),) + (slice(1, -1),) * 3], 0.0, atol=1e-12)


def test_leibniz_classical_rule_for_scalar_f():
    errs = []
    for n in (16, 32):
        g_ = Grid3D((n,) * 3, 2.0 / n, (-1.0,) * 3)
        x, h = g_.coords(), g_.h
        f = scalar_field(cl.basis(0), np.sin(x[0] + 0.5 * x[1]))
        g = np.stack([np.cos(x[j % 3] - j) for j in range(4)])
        classical = fc.apply_D_left(cl.mul(f, g), h) - cl.mul(fc.apply_D_left(f, h), g) - f[0] * fc.apply_D_left(g, h)
        box = fc.box_mask(g_, 0.5)
        errs.append(fc.masked_norms(classical, box, h)[0])
    assert fc.order_estimate(errs[0], errs[1], 2 / 16, 1 / 16) > 1.7


def test_leibniz_order_on_cubic_polynomials():
    rng = np.random.default_rng(6)
    cf, cg = rng.standard_normal((2, 4, 4))
    errs = []
    for n in (16, 32):
        g_ = Grid3D((n,) * 3, 2.0 / n, (-1.0,) * 3)
        x, h = g_.coords(), g_.h
        f = np.stack([c[0] * x[0] ** 3 + c[1] * x[1] ** 2 * x[2] + c[2] * x[0] * x[1] * x[2] + c[3] for c in cf])
        g = np.stack([c[0] * x[2] ** 3 + c[1] * x[0] ** 2 * x[1] + c[2] * x[1] + c[3] for c in cg])
        errs.append(fc.masked_norms(fc.leibniz_residual(f, g, h), fc.box_mask(g_, 0.5), h)[0])
    assert fc.order_estimate(errs[0], errs[1], 2 / 16, 1 / 16) >= 1.9


def test_integrate_examples():
    n = 12
    g = Grid3D.cube(n, 0.0, 1.0)
    assert fc.integrate_interior(np.ones(g.shape), g.h) == pytest.approx(((n - 3) * g.h) ** 3, rel=1e-14)
    gs = Grid3D.cube(13, -1.0, 1.0)
    assert abs(fc.integrate_interior(gs.coords()[1], gs.h)) <= 1e-12


def test_integrate_gaussian_converges():
    vals = []
    for n in (21, 41, 81):
        g = Grid3D.cube(n, -1.0, 1.0)
        x = g.coords()
        f = np.exp(-np.sum(x * x, 0) / (2 * 0.2**2))
        vals.append(fc.integrate_interior(f, g.h, depth=0))
    sd = 0.2
    exact = (np.sqrt(2 * np.pi) * sd * erf(1 / (sd * np.sqrt(2)))) ** 3
    e = [abs(v - exact) for v in vals]
    assert e[0] / e[1] > 3.5 and e[1] / e[2] > 3.5


def test_pairwise_sum_is_order_independent_of_layout():
    rng = np.random.default_rng(9)
    v = rng.standard_normal(10_001)
    a = fc.pairwise_sum(v)
    b = fc.pairwise_sum(v.copy())
    assert a == b
    assert a == pytest.approx(np.sum(v), rel=1e-12)
    cols = rng.standard_normal((1000, 7))
    np.testing.assert_allclose(fc.pairwise_sum(cols, axis=0), cols.sum(axis=0), rtol=1e-12)
    assert fc.pairwise_sum(np.zeros(0)) == 0.0


def test_integrate_bit_identical_under_threads():
    from concurrent.futures import ThreadPoolExecutor

    g = Grid3D.cube(30)
    f = np.sin(g.coords()[0] * 3.1) + 0.1
    ref = fc.integrate_interior(f, g.h)
    with ThreadPoolExecutor(4) as pool:
        outs = list(pool.map(lambda _: fc.integrate_interior(f, g.h), range(8)))
    assert all(o == ref for o in outs)


def test_masked_norms_rejects_undefined_region(grid):
    f = fc.partial_fd(grid.coords()[0], 0, grid.h)
    with pytest.raises(GridMismatch):
        fc.masked_norms(f, np.ones(grid.shape, bool), grid.h)
