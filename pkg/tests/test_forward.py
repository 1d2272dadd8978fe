import numpy as np
import pytest

from calderon_lab import forward as fw
from calderon_lab.errors import DomainViolation, MaskMismatch, NonConvergence
from calderon_lab.experiments import smooth_bump


@pytest.fixture(scope="module")
def ball24():
    g = fw.ball_grid(24)
    return g, fw.ball_domain(g)


def test_ball_mask_structure(ball24):
    g, d = ball24
    x = g.coords()
    r = np.sqrt(np.sum(x * x, 0))
    assert np.all(r[d.interior] < 1.0)
    assert d.boundary.any()
    assert not d.closure[0].any()
    labels = d.labels.copy()
    labels[12, 12, 12] = fw.EXTERIOR
    with pytest.raises(MaskMismatch):
        fw.Domain(g, labels)


def test_extend_conductivity_examples(ball24):
    g, d = ball24
    x = g.coords()
    one = fw.extend_conductivity(np.ones(g.shape), d.interior, d)
    np.testing.assert_array_equal(one, 1.0)
    small = np.sum(x * x, 0) < 0.25
    s = fw.extend_conductivity(np.full(g.shape, 2.0), small, d)
    assert set(np.unique(s)) == {1.0, 2.0}
    assert s.min() == min(2.0, 1.0)
    np.testing.assert_array_equal(fw.extend_conductivity(s, small, d), s)
    with pytest.raises(MaskMismatch):
        fw.extend_conductivity(np.ones(g.shape), np.ones(g.shape, bool), d)


def test_linear_trace_is_reproduced(ball24):
    g, d = ball24
    x = g.coords()
    u = fw.solve_dirichlet(1.0, d, x[1], tol=1e-13)
    assert np.nanmax(np.abs(u - x[1])[d.closure]) <= 1e-10
    assert np.all(np.isnan(u[~d.closure]))


def test_quadratic_harmonic_converges():
    errs = []
    for n in (16, 32):
        g = fw.ball_grid(n)
        d = fw.ball_domain(g)
        x = g.coords()
        exact = x[0] ** 2 - x[1] ** 2
        u = fw.solve_dirichlet(1.0, d, exact)
        errs.append(np.max(np.abs(u - exact)[d.interior]))
    # the 7-point stencil is exact on quadratics, so only round-off remains
    assert max(errs) <= 1e-8


def test_cubic_harmonic_converges_at_order_one_or_better():
    errs = []
    for n in (16, 32):
        g = fw.ball_grid(n)
        d = fw.ball_domain(g)
        x = g.coords()
        exact = np.exp(x[0]) * np.cos(x[1])
        u = fw.solve_dirichlet(1.0, d, exact)
        errs.append(np.max(np.abs(u - exact)[d.interior]))
    assert np.log2(errs[0] / errs[1]) >= 1.0


def test_maximum_principle(ball24):
    g, d = ball24
    rng = np.random.default_rng(0)
    f = rng.standard_normal(g.shape)
    sigma = 1.0 + 0.5 * smooth_bump(g.coords(), 0.5)
    u = fw.solve_dirichlet(sigma, d, f)
    fb = f[d.boundary]
    assert fb.min() - 1e-9 <= np.min(u[d.closure]) and np.max(u[d.closure]) <= fb.max() + 1e-9


def test_layered_flux_continuity():
    fluxes = []
    for n in (24, 48):
        g = fw.ball_grid(n)
        d = fw.ball_domain(g)
        x = g.coords()
        r = np.sqrt(np.sum(x * x, 0))
        sigma = np.where(r < 0.5, 2.0, 1.0)
        u = fw.solve_dirichlet(sigma, d, x[1], tol=1e-12)
        # normal flux through the x1 = const plane just inside and outside r = 0.5 along the x1 axis
        c = n // 2
        i_in = np.argmin(np.abs(g.axis(1) - 0.25))
        i_out = np.argmin(np.abs(g.axis(1) - 0.75))
        h = g.h
        q = lambda i: 2 * sigma[c, i, c] * sigma[c, i + 1, c] / (sigma[c, i, c] + sigma[c, i + 1, c]) * (
            u[c, i + 1, c] - u[c, i, c]) / h  # noqa: E731
        fluxes.append(abs(q(i_in) - q(i_out)))
    # the exact solution has a constant normal flux through the axis
    assert fluxes[1] < fluxes[0]


def test_batched_solve_matches_single(ball24):
    g, d = ball24
    rng = np.random.default_rng(1)
    f = rng.standard_normal((3,) + g.shape)
    batch = fw.solve_dirichlet(1.0, d, f)
    single = fw.solve_dirichlet(1.0, d, f[1])
    np.testing.assert_allclose(batch[1][d.closure], single[d.closure], rtol=0, atol=1e-12)
    again = fw.solve_dirichlet(1.0, d, f)
    np.testing.assert_array_equal(again[:, d.closure], batch[:, d.closure])


def test_nonconvergence_is_reported(ball24):
    g, d = ball24
    with pytest.raises(NonConvergence) as exc:
        fw.solve_dirichlet(1.0, d, np.random.default_rng(2).standard_normal(g.shape), maxiter=3)
    assert exc.value.iterations == 3


def test_pairing_of_linear_traces_is_ball_volume():
    g = fw.ball_grid(48)
    d = fw.ball_domain(g)
    x1 = g.coords()[1]
    p = fw.dtn_pairing(1.0, d, x1, x1)
    assert p.value == pytest.approx(4 * np.pi / 3, rel=0.02)


def test_pairing_examples(ball24):
    g, d = ball24
    x = g.coords()
    sigma = 1.0 + smooth_bump(x, 0.5)
    assert abs(fw.dtn_pairing(sigma, d, np.ones(g.shape), x[0] + x[1] ** 2).value) <= 1e-10
    f1, f2 = np.exp(x[0]) * np.cos(x[2]), x[1] * x[2] + x[0]
    a = fw.dtn_pairing(sigma, d, f1, f2, tol=1e-12).value
    b = fw.dtn_pairing(sigma, d, f2, f1, tol=1e-12).value
    assert abs(a - b) <= 10 * 1e-12 * max(1, abs(a)) * 100
    assert fw.dtn_pairing(sigma, d, f1, f1).value > 0


def test_pairing_extension_independent(ball24):
    g, d = ball24
    x = g.coords()
    sigma = 1.0 + smooth_bump(x, 0.5)
    f1, f2 = np.sin(x[0]) + x[2], x[1] ** 2
    bump = np.where(d.interior, smooth_bump(x, 0.7, 3.0), 0.0)
    a = fw.dtn_pairing(sigma, d, f1, f2, tol=1e-12).value
    b = fw.dtn_pairing(sigma, d, f1, f2, tol=1e-12, extension=f1 + bump).value
    assert abs(a - b) <= 1e-9
    with pytest.raises(MaskMismatch):
        fw.dtn_pairing(sigma, d, f1, f2, extension=f1 + 1.0)


def test_difference_pairing_zero_delta(ball24):
    g, d = ball24
    x = g.coords()
    assert fw.dtn_difference_pairing(1.0, np.zeros(g.shape), 1e-3, d, x[0], x[1]) == 0.0


def test_difference_pairing_domain_checks(ball24):
    g, d = ball24
    x = g.coords()
    with pytest.raises(DomainViolation):
        fw.dtn_difference_pairing(1.0, np.full(g.shape, -1.0) * d.interior, 0.9, d, x[0], x[0])
    with pytest.raises(DomainViolation):
        fw.dtn_difference_pairing(1.0, np.ones(g.shape), 1e-3, d, x[0], x[0])


def test_difference_pairing_linear_in_eps():
    g = fw.ball_grid(32)
    d = fw.ball_domain(g)
    x = g.coords()
    delta = np.where(d.interior, smooth_bump(x, 0.6), 0.0)
    u1, u2 = x[1], x[1] + x[2]
    a, b = d._faces()
    flat = delta.ravel()
    # d/d eps of the harmonic-mean face conductivity at sigma = 1 is the arithmetic mean of delta
    oracle = fw._face_energy(0.5 * (flat[a] + flat[b]), d, u1, u2)
    vals = [fw.dtn_difference_pairing(1.0, delta, e, d, u1, u2, tol=1e-12) for e in (0.2, 0.1, 0.05)]
    defects = [v - oracle for v in vals]
    assert abs(defects[2]) < abs(defects[1]) < abs(defects[0])
    assert (vals[0] - vals[1]) / (vals[1] - vals[2]) == pytest.approx(2.0, rel=0.05)
    # as eps -> 0 the sample tends to the continuous integral as well
    from calderon_lab.fields import integrate_interior

    dens = np.where(d.closure, delta, 0.0)  # grad x1 . grad (x1 + x2) = 1
    assert vals[2] == pytest.approx(integrate_interior(dens, g.h, depth=0), rel=0.05)
