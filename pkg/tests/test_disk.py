import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hmhf.analysis import hardy_suite
from hmhf.disk import DiskGrid, load_field, save_field
from hmhf.errors import MissingTrace, TraceMismatch, ZeroField
from hmhf.geometry import stereographic_reference


@pytest.fixture(scope="module")
def g():
    return DiskGrid(32, 32)


def smooth_scalar(grid, c):
    """Low-mode smooth scalar field with coefficients ``c`` (length 6)."""
    R, T = grid.polar_mesh()
    return (
        c[0]
        + c[1] * R * np.cos(T)
        + c[2] * R**2 * np.sin(2 * T)
        + c[3] * R**2
        + c[4] * np.exp(-R**2) * R**3 * np.cos(3 * T)
        + c[5] * R**4
    )


coeffs = st.lists(st.floats(-2, 2, allow_nan=False), min_size=6, max_size=6)


# -- grid invariants ------------------------------------------------------------------


@pytest.mark.parametrize("n_r,n_t", [(8, 16), (33, 48), (128, 64)])
def test_grid_invariants(n_r, n_t):
    g = DiskGrid(n_r, n_t)
    assert g.weights.sum() == pytest.approx(math.pi, rel=1e-12)
    assert g.dtheta * n_t == 2 * math.pi
    assert np.all((g.r > 0) & (g.r < 1))
    assert g.r_all[-1] == 1.0


def test_grid_validation():
    for bad in [(7, 16), (8, 15), (8, 14)]:
        with pytest.raises(ValueError):
            DiskGrid(*bad)


def test_missing_trace(g):
    with pytest.raises(MissingTrace):
        g.gradient_sq(np.zeros((g.n_r, g.n_theta)))
    with pytest.raises(MissingTrace):
        g.laplacian(np.zeros((g.n_r, g.n_theta, 3)))


# -- gradient and laplacian examples ---------------------------------------------


def test_gradient_sq_examples(g):
    f = g.evaluate(lambda R, T: np.full_like(R, 2.5))
    assert np.max(np.abs(g.gradient_sq(f))) == 0.0
    x1 = g.evaluate(lambda R, T: R * np.cos(T))
    np.testing.assert_allclose(g.gradient_sq(x1)[: g.n_r], 1.0, atol=1e-10)


def test_gradient_sq_of_r_squared_is_second_order():
    errs = []
    for n in (16, 32, 64):
        g = DiskGrid(n, 32)
        f = g.evaluate(lambda R, T: R**2)
        e = np.abs(g.gradient_sq(f)[: g.n_r] - 4 * g.r[:, None] ** 2).max()
        errs.append(e)
    assert errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.5


def test_laplacian_examples(g):
    const = g.evaluate(lambda R, T: np.full_like(R, -1.0))
    assert np.max(np.abs(g.laplacian(const))) == 0.0
    x1 = g.evaluate(lambda R, T: R * np.cos(T))
    assert np.max(np.abs(g.laplacian(x1)[: g.n_r])) < 1e-10
    r2 = g.evaluate(lambda R, T: R**2)
    np.testing.assert_allclose(g.laplacian(r2)[: g.n_r], 4.0, atol=1e-10)


def test_laplacian_second_order_on_smooth_field():
    errs = []
    for n in (16, 32, 64):
        g = DiskGrid(n, 32)
        f = g.evaluate(lambda R, T: R**4 * np.cos(2 * T))
        exact = 12 * g.r[:, None] ** 2 * np.cos(2 * g.theta)[None]
        errs.append(np.abs(g.laplacian(f)[: g.n_r] - exact).max())
    assert errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.5


# -- quadrature ------------------------------------------------------------------------


def test_integrate_examples(g):
    assert g.integrate(np.ones(g.shape)) == pytest.approx(math.pi, rel=1e-12)
    cos = g.evaluate(lambda R, T: np.cos(T))
    assert abs(g.integrate(cos)) < 1e-12
    errs = []
    for n in (16, 32, 64):
        gg = DiskGrid(n, 16)
        errs.append(abs(gg.integrate(gg.evaluate(lambda R, T: R**2)) - math.pi / 2))
    assert errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.5


@pytest.mark.parametrize("k", [1, 2, 5, 15])
def test_integrate_annihilates_resolved_modes(g, k):
    for p in (lambda R: 1.0 + 0 * R, lambda R: R):
        s = g.evaluate(lambda R, T: p(R) * np.cos(k * T))
        assert abs(g.integrate(s)) < 1e-12
        s = g.evaluate(lambda R, T: p(R) * np.sin(k * T))
        assert abs(g.integrate(s)) < 1e-12


# -- linearity and summation by parts ----------------------------------------------------


@settings(max_examples=30, deadline=None)
@given(coeffs, coeffs, st.floats(-3, 3), st.floats(-3, 3))
def test_operators_are_linear(g, c1, c2, a, b):
    f1 = smooth_scalar(g, c1)
    f2 = smooth_scalar(g, c2)
    for op in (g.laplacian, g.d_theta, g.d_r, g.d_rr):
        lhs = op(a * f1 + b * f2)
        rhs = a * op(f1) + b * op(f2)
        scale = 1 + abs(a) * np.abs(op(f1)).max() + abs(b) * np.abs(op(f2)).max()
        # operator-norm bound of the stiffest stencil (angular modes at the first ring)
        norm = 4 / g.dr**2 + (g.n_theta / 2) ** 2 / g.r[0] ** 2
        scale += (abs(a) * np.abs(f1).max() + abs(b) * np.abs(f2).max()) * norm
        assert np.abs(lhs - rhs).max() <= 64 * np.finfo(float).eps * scale


@settings(max_examples=30, deadline=None)
@given(coeffs, coeffs)
def test_summation_by_parts(g, c1, c2):
    R, _ = g.polar_mesh()
    h = smooth_scalar(g, c1) * (1 - R**2)
    h[g.n_r] = 0.0
    f = smooth_scalar(g, c2)
    lhs = g.integrate(h * g.laplacian(f)) + g.dirichlet_form(h, f)
    scale = g.l2_norm(h) * g.l2_norm(f) + 1e-300
    assert abs(lhs) <= 1e-10 * max(scale, 1.0)


def test_energy_matches_dirichlet_form(g):
    rng = np.random.default_rng(0)
    u = smooth_scalar(g, rng.normal(size=6))
    assert g.dirichlet_form(u, u) == pytest.approx(2 * g.energy(u), rel=1e-12)


# -- energy of reference maps ----------------------------------------------------------


def test_reference_energy_examples():
    ref = stereographic_reference(0.1)
    g = DiskGrid(128, 64)
    assert g.energy(g.evaluate(ref)) == pytest.approx(0.12440, rel=1e-2)
    ref = stereographic_reference(1.0)
    g = DiskGrid(256, 64)
    assert g.energy(g.evaluate(ref)) == pytest.approx(2 * math.pi, rel=1e-2)
    g = DiskGrid(16, 16)
    assert g.energy(np.ones(g.shape + (3,))) == 0.0


def test_reference_energy_converges_second_order():
    ref = stereographic_reference(0.3)
    errs = []
    for n in (16, 32, 64):
        g = DiskGrid(n, 32)
        errs.append(abs(g.energy(g.evaluate(ref)) - ref.exact_energy))
    assert errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.5


def test_reference_is_discretely_stationary_at_second_order():
    ref = stereographic_reference(0.3)
    res = []
    for n in (16, 32, 64):
        g = DiskGrid(n, 32)
        u = g.evaluate(ref)
        lap = g.laplacian(u)
        tension = lap[: g.n_r] + g.gradient_sq(u)[: g.n_r, :, None] * u[: g.n_r]
        res.append(g.l2_norm(g.vanishing(tension)))
    assert res[0] / res[1] > 3.5 and res[1] / res[2] > 3.5


# -- Hardy ratio ----------------------------------------------------------------------------


def test_hardy_examples():
    g = DiskGrid(256, 64)
    R, _ = g.polar_mesh()
    assert g.hardy_ratio(1 - R[: g.n_r]) == pytest.approx(1.0, rel=0.02)
    assert g.hardy_ratio((1 - R[: g.n_r]) ** 2) == pytest.approx(0.25, rel=0.02)
    with pytest.raises(ZeroField):
        g.hardy_ratio(np.zeros((g.n_r, g.n_theta)))
    with pytest.raises(ValueError):
        g.hardy_ratio(np.ones(g.shape))


def hardy_suite_maxima(sizes):
    out = []
    for n in sizes:
        g = DiskGrid(n, 64)
        out.append(max(g.hardy_ratio(h) for h in hardy_suite(g, np.random.default_rng(11), 50)))
    return out


def test_hardy_suite_bound_and_convergence():
    m = hardy_suite_maxima((64, 128, 256))
    assert max(m[1:]) <= 4.05
    # Cauchy-type refinement: successive changes shrink
    assert abs(m[2] - m[1]) < abs(m[1] - m[0])


@pytest.mark.xfail(
    strict=True,
    reason="midpoint quadrature underestimates the convex Hardy weight, so the discrete maximum grows toward its limit",
)
def test_hardy_suite_maximum_non_increasing_under_refinement():
    m = hardy_suite_maxima((128, 256))
    assert m[1] <= m[0] * (1 + 1e-12)


@settings(max_examples=25, deadline=None)
@given(coeffs, st.floats(0.6, 3.0))
def test_hardy_random_bumps(c, a):
    g = DiskGrid(64, 32)
    R, _ = g.polar_mesh()
    h = (1 - R[: g.n_r]) ** a * smooth_scalar(g, c)[: g.n_r]
    if np.max(np.abs(h)) < 1e-6:
        return
    assert 0 <= g.hardy_ratio(h) <= 4.05


# -- H1 distance --------------------------------------------------------------------------


def test_h1_distance_examples():
    g = DiskGrid(32, 32)
    u = g.evaluate(stereographic_reference(0.5))
    assert g.h1_distance(u, u) == 0.0
    R, T = g.polar_mesh()
    bump = ((1 - R**2) * np.exp(-R**2) * np.cos(T))[..., None] * np.array([1.0, 0.0, 0.0])
    d = [g.h1_distance(u + e * bump, u) / e for e in (1e-2, 1e-3, 1e-4)]
    assert max(d) / min(d) - 1 < 1e-2
    v = u.copy()
    v[g.n_r] += 1e-3
    with pytest.raises(TraceMismatch):
        g.h1_distance(u, v)


def test_h1_distance_between_discretisations_converges():
    r1 = stereographic_reference(0.3)
    r2 = stereographic_reference(0.35)
    errs = []
    for n in (16, 32, 64):
        g = DiskGrid(n, 32)
        a = g.evaluate(r1)
        b = g.evaluate(r2)
        b[g.n_r] = a[g.n_r]
        R, _ = g.polar_mesh()
        # same trace: blend the difference to zero at r = 1
        b = a + (b - a) * (1 - R**2)[..., None]
        errs.append(g.h1_distance(a, b))
    d1, d2 = errs[1] - errs[0], errs[2] - errs[1]
    assert abs(d2) < abs(d1) / 3


# -- pointwise Hessian ---------------------------------------------------------------------


def test_hessian_sq_of_reference():
    ref = stereographic_reference(0.5)
    errs = []
    for n in (16, 32, 64):
        g = DiskGrid(n, 32)
        u = g.evaluate(ref)
        mask = g.r <= 0.5
        errs.append(np.abs(g.hessian_sq(u)[mask] - ref.hessian_sq(g.r[mask])[:, None]).max())
    assert errs[0] / errs[1] > 3 and errs[1] / errs[2] > 3


# -- heat solver and IO ---------------------------------------------------------------------


def test_heat_solver_inverts_operator():
    g = DiskGrid(24, 32)
    dt = 0.01
    rng = np.random.default_rng(2)
    x = rng.normal(size=g.shape + (3,))
    b = x[: g.n_r] - dt * g.laplacian(x)[: g.n_r]
    sol = g.heat_solver(dt).solve(b, x[g.n_r])
    np.testing.assert_allclose(sol, x[: g.n_r], atol=1e-12)


def test_field_round_trip(tmp_path):
    g = DiskGrid(8, 16)
    rng = np.random.default_rng(3)
    for f in (rng.normal(size=g.shape), rng.normal(size=g.shape + (3,))):
        save_field(tmp_path / "f.csv", g, f)
        g2, f2 = load_field(tmp_path / "f.csv")
        assert g2 == g
        np.testing.assert_array_equal(f2, f)
