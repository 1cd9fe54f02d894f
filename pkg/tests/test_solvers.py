import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from czlab import solvers as sv
from czlab.fields import Domain, ScalarField, SpaceTimeDomain


def test_parse_recipe():
    expr, syms = sv.parse_recipe("u=x1**2*sin(pi*x2)")
    assert syms["x1"] in expr.free_symbols
    with pytest.raises(ValueError):
        sv.parse_recipe("u=x1*y")
    with pytest.raises(ValueError):
        sv.parse_recipe("v=x1")


def test_analytic_forcing():
    _, f, s = sv.analytic_forcing("x1**2*x2 + t*x2", 2, True)
    assert f.equals(s["x2"] - 2 * s["x2"])
    with pytest.raises(ValueError):
        sv.analytic_forcing("t*x1", 2, False)
    with pytest.raises(ValueError):
        sv.analytic_forcing("x3", 2, False)


def test_manufactured_residual_second_order():
    res = []
    for m in (33, 65):
        pair = sv.manufactured_pair("sin(x1)*exp(x2)", Domain.box(2, m, 1.0))
        res.append(pair.residual)
    assert 3.0 < res[0] / res[1] < 5.0


def test_manufactured_quadratic_is_exact():
    pair = sv.manufactured_pair("u=x1**2 - 3*x1*x2", Domain.box(2, 17, 1.0))
    assert pair.residual < 1e-10
    assert pair.provenance == "manufactured"


def test_capping_of_singular_recipe():
    d = Domain.box(2, 33, 1.0)
    with pytest.raises(ValueError):
        sv.manufactured_pair("(x1**2+x2**2)**(-0.25)", d)
    pair = sv.manufactured_pair("(x1**2+x2**2)**(-0.25)", d, singular_at=(0.0, 0.0))
    assert np.all(np.isfinite(pair.u.values))
    assert pair.u.values.max() == pytest.approx(d.h**-0.5)


@given(st.integers(0, 2**31 - 1), st.integers(3, 12))
def test_conjugate_gradient_spd(seed, k):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(k, k))
    A = A @ A.T + k * np.eye(k)
    b = rng.normal(size=k)
    x, _ = sv.conjugate_gradient(lambda v: A @ v, b, rtol=1e-13)
    np.testing.assert_allclose(A @ x, b, atol=1e-9 * np.linalg.norm(b))


def test_conjugate_gradient_reports_stall():
    A = np.diag(np.linspace(1, 1e6, 50))
    with pytest.raises(sv.ConvergenceError):
        sv.conjugate_gradient(lambda v: A @ v, np.ones(50), maxiter=3)


def test_poisson_recovers_manufactured_solution():
    errs = []
    for m in (33, 65):
        d = Domain.box(2, m, 1.0)
        ref = sv.manufactured_pair("sin(pi*x1)*sinh(x2)", d)
        sol = sv.solve_poisson(ref.f, boundary=ref.u)
        assert sol.residual < 1e-8 * np.abs(ref.f.values).max()
        errs.append(np.abs(sol.u.values - ref.u.values).max())
    assert 3.5 < errs[0] / errs[1] < 4.5


def test_poisson_exact_for_cubic():
    d = Domain.box(2, 21, 1.0)
    ref = sv.manufactured_pair("x1**3 + x1*x2**2", d)
    sol = sv.solve_poisson(ref.f, boundary=ref.u)
    np.testing.assert_allclose(sol.u.values, ref.u.values, atol=1e-10)


def test_heat_crank_nicolson_second_order():
    errs = []
    for m in (17, 33):
        sp = Domain.box(2, m, 1.0)
        sd = SpaceTimeDomain(sp, 0.0, 0.25, m)
        ref = sv.manufactured_pair("exp(-t)*sin(x1)*cos(x2) + t*x1", sd)
        u0 = ScalarField(sp, ref.u.values[0])
        sol = sv.solve_heat(ref.f, u0, boundary=ref.u)
        assert sol.residual < 1e-9
        errs.append(np.abs(sol.u.values - ref.u.values).max())
    assert errs[0] / errs[1] > 3.0
    with pytest.raises(ValueError):
        sv.solve_heat(ref.f, u0, theta=0.2)


@given(st.integers(0, 1000), st.sampled_from(sv.FAMILIES))
def test_corpus_deterministic_and_grid_independent(seed, family):
    cspec = sv.CorpusSpec(seed=seed, count=2, family=family)
    coarse = sv.corpus(cspec, Domain.box(2, 17, 1.0))
    fine = sv.corpus(cspec, Domain.box(2, 33, 1.0))
    again = sv.corpus(cspec, Domain.box(2, 17, 1.0))
    for a, b, c in zip(coarse, fine, again):
        assert a.u.values.tobytes() == c.u.values.tobytes()
        # every coarse node is a fine node
        np.testing.assert_allclose(a.u.values, b.u.values[::2, ::2], rtol=1e-12, atol=1e-12)


def test_parabolic_corpus_residual_small():
    sd = SpaceTimeDomain(Domain.box(2, 33, 1.0), -0.5, 0.5, 33)
    for pair in sv.corpus(sv.CorpusSpec(count=3), sd):
        assert pair.is_parabolic
        assert pair.residual < 0.5


def test_pair_roundtrip_and_scaling(tmp_path):
    pair = sv.manufactured_pair("x1*x2", Domain.box(2, 12, 1.0))
    sv.write_pair(tmp_path, "p", pair)
    back = sv.read_pair(tmp_path, "p")
    np.testing.assert_array_equal(back.u.values, pair.u.values)
    assert back.meta["recipe"] == "x1*x2" and back.residual == pair.residual
    s = pair.scaled(-2.0)
    np.testing.assert_array_equal(s.f.values, -2.0 * pair.f.values)


def test_corpus_spec_validation():
    with pytest.raises(ValueError):
        sv.CorpusSpec(family="nope")
    with pytest.raises(ValueError):
        sv.CorpusSpec(amplitude=(0.0, 1.0))
