import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from czlab.fields import (
    Domain,
    Region,
    ScalarField,
    SpaceTimeDomain,
    SymTensorField,
    ball_offsets,
    dt,
    gradient,
    hessian,
    interior_mask,
    laplacian,
    lp_integral,
    lp_norm,
    mollify,
    region_average,
    region_mask,
    region_measure,
    time_offsets,
)


def test_domain_validation():
    with pytest.raises(ValueError):
        Domain.box(4, 16)
    with pytest.raises(ValueError):
        Domain.box(2, 4)
    with pytest.raises(ValueError):
        Domain(2, (0, 0), (1, 2), 16)
    with pytest.raises(ValueError):
        SpaceTimeDomain(Domain.box(2, 16), 1.0, 0.0, 16)


def test_domain_geometry():
    d = Domain.box(2, 65, 2.0)
    assert d.h == pytest.approx(4 / 64)
    assert d.shape == (65, 65)
    assert d.nearest_node((0.0, 0.0)) == (32, 32)
    np.testing.assert_allclose(d.node((32, 40)), [0.0, 0.5])
    st_ = SpaceTimeDomain.parabolic(d, -0.1, 9)
    assert st_.tau == pytest.approx(d.h**2 / 2)
    assert st_.shape == (9, 65, 65)


def test_fields_are_frozen_and_finite():
    d = Domain.box(2, 16)
    u = ScalarField(d, np.zeros(d.shape))
    with pytest.raises(ValueError):
        u.values[0, 0] = 1.0
    bad = np.zeros(d.shape)
    bad[3, 3] = np.nan
    with pytest.raises(ValueError):
        ScalarField(d, bad)
    with pytest.raises(ValueError):
        ScalarField(d, np.zeros((3, 3)))


def test_region_membership_is_strict_and_half_open():
    d = Domain.box(1, 9, 1.0)  # nodes at multiples of 0.25
    mask = region_mask(d, Region.ball((0.0,), 0.5))
    np.testing.assert_array_equal(d.axis(0)[mask], [-0.25, 0.0, 0.25])
    sd = SpaceTimeDomain(d, -1.0, 1.0, 9)
    cube = region_mask(sd, Region.cube((0.0,), 0.0, 1.0))
    times = sd.times()[np.any(cube, axis=1)]
    np.testing.assert_allclose(times, [-0.25, 0.0, 0.25, 0.5])
    with pytest.raises(ValueError):
        region_mask(sd, Region.ball((0.0,), 0.5))
    with pytest.raises(ValueError):
        region_measure(d, Region.ball((5.0,), 0.1))


@given(st.integers(1, 3), st.floats(0.05, 0.3), st.floats(0.1, 1.0))
def test_ball_offsets_match_region_mask(n, h, r):
    ks = ball_offsets(n, h, r)
    assert np.all(np.sum((ks * h) ** 2, axis=1) < r * r + 1e-12)
    # symmetric under k -> -k
    assert {tuple(k) for k in ks} == {tuple(-k) for k in ks}


@given(st.floats(0.01, 0.3), st.floats(0.2, 1.5))
def test_time_offsets_half_open(tau, r):
    js = time_offsets(tau, r)
    half = r * r / 2
    assert np.all(js * tau > -half) and np.all(js * tau <= half)
    assert not ((js[0] - 1) * tau > -half)
    assert not ((js[-1] + 1) * tau <= half)


def test_hessian_exact_on_quadratics():
    d = Domain.box(2, 33, 1.0)
    u = ScalarField.from_function(d, lambda x, y: 3 * x * x + 2 * x * y - y * y + x)
    H = hessian(u)
    np.testing.assert_allclose(H.component(0, 0), 6, atol=1e-9)
    np.testing.assert_allclose(H.component(0, 1), 2, atol=1e-9)
    np.testing.assert_allclose(H.component(1, 1), -2, atol=1e-9)
    np.testing.assert_allclose(laplacian(u).values, 4, atol=1e-9)
    np.testing.assert_allclose(H.trace(), laplacian(u).values, atol=1e-9)
    gx, gy = gradient(u)
    np.testing.assert_allclose(gx.values, 6 * d.coords()[0] + 2 * d.coords()[1] + 1, atol=1e-9)


def test_frobenius_magnitude_counts_off_diagonals_twice():
    d = Domain.box(2, 16)
    vals = np.stack([np.full(d.shape, 1.0), np.full(d.shape, 2.0), np.full(d.shape, 3.0)])
    H = SymTensorField(d, vals)
    np.testing.assert_allclose(H.magnitude(), np.sqrt(1 + 2 * 4 + 9))
    np.testing.assert_allclose(H.matrix()[:, :, 0, 0], [[1, 2], [2, 3]])


def test_second_order_convergence_of_hessian():
    errs = []
    for m in (33, 65, 129):
        d = Domain.box(2, m, 1.0)
        u = ScalarField.from_function(d, lambda x, y: np.sin(2 * x) * np.cos(y))
        H = hessian(u)
        exact = -2 * np.cos(2 * d.coords()[0]) * np.sin(d.coords()[1]) + 0 * d.coords()[1]
        errs.append(np.max(np.abs(H.component(0, 1) - exact)))
    assert 3.5 < errs[0] / errs[1] < 4.5 and 3.5 < errs[1] / errs[2] < 4.5


def test_spacetime_derivatives():
    sd = SpaceTimeDomain(Domain.box(2, 17, 1.0), 0.0, 1.0, 17)
    u = ScalarField.from_function(sd, lambda t, x, y: t * t + x * x * y)
    np.testing.assert_allclose(dt(u).values, 2 * sd.coords()[0] + 0 * u.values, atol=1e-9)
    np.testing.assert_allclose(laplacian(u).values, 2 * sd.coords()[2] + 0 * u.values, atol=1e-9)


def test_interior_mask_margins():
    sd = SpaceTimeDomain(Domain.box(2, 10), 0.0, 1.0, 10)
    assert interior_mask(sd, 2).sum() == 6 * 6 * 6
    assert interior_mask(sd, 2, time_margin=0).sum() == 10 * 6 * 6


def test_norms_and_averages():
    d = Domain.box(2, 41, 1.0)
    one = ScalarField(d, np.ones(d.shape))
    reg = Region.ball((0.0, 0.0), 0.5)
    assert region_average(one, reg) == pytest.approx(1)
    assert lp_norm(one, None, 2) ** 2 == pytest.approx(d.size * d.cell_volume)
    assert lp_integral(one, reg, 3) == pytest.approx(region_measure(d, reg))
    assert lp_norm(one * 3, reg, np.inf) == 3.0
    with pytest.raises(ValueError):
        lp_norm(one, reg, 0.5)


@given(st.floats(-5, 5).filter(lambda v: v == 0 or abs(v) > 1e-6), st.floats(1.0, 3.0))
def test_lp_norm_homogeneous(lam, p):
    d = Domain.box(2, 16)
    u = ScalarField(d, np.random.default_rng(0).normal(size=d.shape))
    assert lp_norm(u * lam, None, p) == pytest.approx(abs(lam) * lp_norm(u, None, p), rel=1e-12, abs=1e-300)


def test_region_average_of_tensor_is_symmetric_matrix():
    d = Domain.box(2, 33, 1.0)
    u = ScalarField.from_function(d, lambda x, y: x * y + x * x)
    avg = region_average(hessian(u), Region.ball((0.0, 0.0), 0.5))
    np.testing.assert_allclose(avg, [[2, 1], [1, 0]], atol=1e-9)


def test_mollify_preserves_constants_and_flags_edges():
    d = Domain.box(2, 33, 1.0)
    c = ScalarField(d, np.full(d.shape, 2.5))
    out = mollify(c, 4 * d.h)
    np.testing.assert_allclose(out.values, 2.5)
    assert out.valid is not None and not out.valid[0, 0] and out.valid[16, 16]
    with pytest.raises(ValueError):
        mollify(c, d.h)
