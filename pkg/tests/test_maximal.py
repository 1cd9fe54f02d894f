import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from czlab import maximal as mx
from czlab.fields import Domain, Region, ScalarField, SpaceTimeDomain, hessian
from czlab.maximal import RadiusSet

SEEDS = st.integers(0, 2**32 - 1)
D16 = Domain.box(2, 16)
P8 = SpaceTimeDomain.parabolic(Domain.box(2, 10), -0.1, 10)


def _same(a, b):
    return (np.array_equal(a.values, b.values, equal_nan=True)
            and np.array_equal(a.radius_argmax, b.radius_argmax, equal_nan=True)
            and np.array_equal(a.valid_mask, b.valid_mask))


@given(SEEDS, st.sampled_from(["geometric", "dense"]))
def test_mask_equals_brute_bitwise(seed, policy):
    w = ScalarField(D16, np.random.default_rng(seed).uniform(-10, 10, D16.shape))
    radii = RadiusSet.from_policy(D16, policy)
    assert _same(mx.sharp_maximal_2(w, radii=radii), mx.sharp_maximal_2(w, radii=radii, backend="brute"))
    assert _same(mx.hl_maximal(w, radii=radii), mx.hl_maximal(w, radii=radii, backend="brute"))


@given(SEEDS)
def test_parabolic_mask_equals_brute_bitwise(seed):
    w = ScalarField(P8, np.random.default_rng(seed).normal(size=P8.shape))
    a = mx.sharp_maximal_2_parabolic(w)
    b = mx.sharp_maximal_2_parabolic(w, backend="brute")
    assert _same(a, b)


@given(SEEDS)
def test_fft_like_matches_mask(seed):
    w = ScalarField(D16, np.random.default_rng(seed).normal(size=D16.shape))
    a = mx.sharp_maximal_2(w)
    b = mx.sharp_maximal_2(w, backend="fft-like")
    np.testing.assert_array_equal(a.valid_mask, b.valid_mask)
    np.testing.assert_allclose(b.values, a.values, rtol=1e-9, atol=1e-12)


@given(SEEDS, st.floats(-3, 3).filter(lambda v: abs(v) > 1e-3))
def test_scaling_and_constant_shift(seed, lam):
    w = ScalarField(D16, np.random.default_rng(seed).normal(size=D16.shape))
    base = mx.sharp_maximal_2(w)
    scaled = mx.sharp_maximal_2(w * lam)
    shifted = mx.sharp_maximal_2(w + 5.0)
    np.testing.assert_allclose(scaled.values, lam * lam * base.values, rtol=1e-9)
    np.testing.assert_allclose(shifted.values, base.values, rtol=1e-9, atol=1e-9)
    assert np.all(base.valid_values() >= 0)


@given(SEEDS)
def test_hl_dominates_sharp(seed):
    w = ScalarField(D16, np.random.default_rng(seed).normal(size=D16.shape))
    s, h = mx.sharp_maximal_2(w), mx.hl_maximal(w)
    assert np.all(h.valid_values() >= s.valid_values())


def test_translation_covariance():
    d = Domain.box(2, 24)
    rng = np.random.default_rng(3)
    vals = rng.normal(size=d.shape)
    w = ScalarField(d, vals)
    shifted = ScalarField(d, np.roll(vals, (2, 1), axis=(0, 1)))
    radii = RadiusSet.geometric(d, r_max=4 * d.h)
    pts = [(10, 10), (12, 9)]
    a = mx.sharp_maximal_2(w, pts, radii)
    b = mx.sharp_maximal_2(shifted, [(12, 11), (14, 10)], radii)
    np.testing.assert_array_equal(a.values, b.values)


def test_closed_form_linear_function():
    d = Domain.box(2, 64)
    w = ScalarField.from_function(d, lambda x, y: x + 0 * y)
    pt = d.nearest_node((0.0, 0.0))
    radii = RadiusSet.geometric(d)
    row = mx.oscillation_at(w, pt, radii)
    R = radii.radii[int(np.flatnonzero(np.isfinite(row))[-1])]
    val = mx.sharp_maximal_2(w, [pt], radii).values[0]
    assert abs(val - R * R / 4) <= 3 * d.h**2


def test_argmax_is_smallest_radius_on_ties():
    w = ScalarField(D16, np.zeros(D16.shape))
    mf = mx.sharp_maximal_2(w, [(8, 8)])
    assert mf.values[0] == 0.0
    assert mf.radius_argmax[0] == mx.RadiusSet.geometric(D16).radii[0]


def test_inadmissible_points_are_nan():
    w = ScalarField(D16, np.ones(D16.shape))
    mf = mx.sharp_maximal_2(w, [(0, 0), (8, 8)])
    assert not mf.valid_mask[0] and np.isnan(mf.values[0]) and mf.valid_mask[1]


def test_tensor_input_adds_weighted_components():
    d = Domain.box(2, 32)
    u = ScalarField.from_function(d, lambda x, y: np.sin(x) * np.cos(2 * y))
    H = hessian(u)
    pts = [(16, 16), (12, 18)]
    total = mx.sharp_maximal_2(H, pts)
    table = mx.oscillation_table(H, pts)
    parts = sum(wt * mx.oscillation_table(ScalarField(d, c), pts) for c, wt in H.components())
    np.testing.assert_allclose(table, parts, rtol=1e-10)
    np.testing.assert_allclose(total.values, np.nanmax(table, axis=1), rtol=0)


def test_local_oscillation_matches_table():
    d = Domain.box(2, 32)
    w = ScalarField(d, np.random.default_rng(0).normal(size=d.shape))
    radii = RadiusSet((0.5,))
    pt = (16, 16)
    centre = tuple(d.node(pt))
    direct = mx.local_oscillation2(w, Region.ball(centre, 0.5))
    assert mx.oscillation_at(w, pt, radii)[0] == pytest.approx(direct, rel=1e-10)


def test_parabolic_time_closed_form():
    sp = Domain.box(2, 33, 1.0)
    sd = SpaceTimeDomain(sp, -1.0, 1.0, 65)
    w = ScalarField.from_function(sd, lambda t, x, y: t + 0 * x)
    R = 1.0
    osc = mx.local_oscillation2(w, Region.cube((0.0, 0.0), 0.0, R))
    assert abs(osc - R**4 / 12) <= 3 * (sp.h**2 + sd.tau)


def test_validation():
    w = ScalarField(D16, np.ones(D16.shape))
    with pytest.raises(ValueError):
        mx.sharp_maximal_2(w, backend="gpu")
    with pytest.raises(ValueError):
        RadiusSet((0.5, 0.25))
    with pytest.raises(ValueError):
        mx.sharp_maximal_2(w, radii=RadiusSet((D16.h,)))
    with pytest.raises(ValueError):
        mx.sharp_maximal_2_parabolic(w)
