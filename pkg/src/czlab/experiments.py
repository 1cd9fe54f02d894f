"""Experiment catalog: each entry runs one verification over a refinement
ladder and judges the outcome against explicit acceptance rules.

An experiment is a function ``run(settings, options) -> Outcome``.  ``options``
holds the key-value pairs of the experiment's own config section; anything
not set there falls back to the run-wide settings or the experiment default.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import maximal as mx
from . import verify as vf
from .fields import Domain, ScalarField, SpaceTimeDomain, hessian, laplacian, region_mask, region_measure
from .maximal import RadiusSet
from .solvers import CorpusSpec, SolutionPair, corpus, manufactured_pair, solve_heat, solve_poisson


@dataclass
class Settings:
    n: int = 2
    seed: int = 0
    grids: tuple | None = None
    parabolic_grids: tuple | None = None
    p: tuple | None = None
    backend: str = "mask"
    radius_ladder: str = "geometric"
    corpus: CorpusSpec = field(default_factory=CorpusSpec)


class Options(dict):
    """String-valued section options with typed accessors."""

    def ints(self, key, default):
        return tuple(int(v) for v in self[key].split(",")) if key in self else tuple(default)

    def floats(self, key, default):
        return tuple(float(v) for v in self[key].split(",")) if key in self else tuple(default)

    def int(self, key, default):
        return int(self[key]) if key in self else default

    def float(self, key, default):
        return float(self[key]) if key in self else default


@dataclass
class Rule:
    name: str
    passed: bool
    value: object
    threshold: str

    def to_dict(self):
        return vf._jsonable({"name": self.name, "passed": bool(self.passed), "value": self.value,
                             "threshold": self.threshold})


@dataclass
class Outcome:
    reports: list = field(default_factory=list)
    rules: list = field(default_factory=list)
    fields: dict = field(default_factory=dict)

    def keep(self, name: str, fld) -> None:
        """Attach a field for ``--dump-fields``; the runner drops it otherwise."""
        self.fields[name] = fld

    def add(self, rep: vf.EstimateReport, case: str | None = None, level: int | None = None):
        if case is not None:
            rep.extra["case"] = case
        if level is not None:
            rep.level = level
        self.reports.append(rep)
        return rep

    def rule(self, name, passed, value, threshold):
        self.rules.append(Rule(name, bool(passed), value, threshold))

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rules)


@dataclass(frozen=True)
class Experiment:
    name: str
    anchor: str
    summary: str
    run: Callable


def drift(values) -> float:
    """Largest relative gap between any level and the finest one."""
    vals = [float(v) for v in values]
    fine = vals[-1]
    if fine == 0:
        return 0.0 if all(v == 0 for v in vals) else float("inf")
    return max(abs(v - fine) / abs(fine) for v in vals)


def _contractions(values) -> list[float]:
    return [a / b if b != 0 else float("inf") for a, b in zip(values[:-1], values[1:])]


def _elliptic_grids(s: Settings, o: Options, default=(64, 128)):
    return o.ints("grids", s.grids or default)


def _parabolic_grids(s: Settings, o: Options, default=(32, 64)):
    return o.ints("grids", s.parabolic_grids or default)


def _radii(s: Settings, domain) -> RadiusSet:
    return RadiusSet.from_policy(domain, s.radius_ladder)


def _corpus_spec(s: Settings, o: Options, count: int | None = None) -> CorpusSpec:
    c = s.corpus
    return CorpusSpec(seed=o.int("seed", c.seed), count=o.int("count", c.count if count is None else count),
                      family=o.get("family", c.family), decay=o.float("decay", c.decay),
                      amplitude=c.amplitude, modes=c.modes, base_frequency=c.base_frequency)


def parabolic_domain(n: int, m: int) -> SpaceTimeDomain:
    """Unit box in space, ``t`` in ``[-1/2, 1/2]`` with ``m`` slices (τ of order h/2)."""
    return SpaceTimeDomain(Domain.box(n, m, 1.0), -0.5, 0.5, m)


def _sharp_scale(H, domain, r: float = 1.0) -> float:
    """Mean square Hessian magnitude on the unit region: the yardstick for "identically 0"."""
    reg = vf._origin_cube(domain, r) if isinstance(domain, SpaceTimeDomain) else vf._origin_ball(domain, r)
    mask = region_mask(domain, reg)
    return float(np.mean(H.magnitude()[mask] ** 2))


ZERO_REL = 1e-12


# ---------------------------------------------------------------------------
# maximal operators


def run_maximal_oracle(s: Settings, o: Options) -> Outcome:
    out = Outcome()
    seeds = o.int("seeds", 50)
    extra_seeds = o.int("extra_backend_seeds", 5)
    grid = o.int("grid", 32)
    pgrid = o.int("parabolic_grid", 16)
    dom = Domain.box(2, grid)
    pdom = SpaceTimeDomain.parabolic(Domain.box(2, pgrid), -0.1, pgrid)
    radii, pradii = _radii(s, dom), _radii(s, pdom)
    ok_e = ok_p = ok_h = True
    fft_gap = 0.0
    for seed in range(s.seed, s.seed + seeds):
        rng = np.random.default_rng(seed)
        w = ScalarField(dom, rng.uniform(-10, 10, dom.shape))
        fast = mx.sharp_maximal_2(w, None, radii, "mask")
        slow = mx.sharp_maximal_2(w, None, radii, "brute")
        ok_e &= _same(fast, slow)
        if seed == s.seed:
            out.keep("w", w)
            out.keep("sharp_maximal", fast)
        wp = ScalarField(pdom, rng.uniform(-10, 10, pdom.shape))
        ok_p &= _same(mx.sharp_maximal_2_parabolic(wp, None, pradii, "mask"),
                      mx.sharp_maximal_2_parabolic(wp, None, pradii, "brute"))
        if seed - s.seed >= extra_seeds:
            continue
        hf = mx.hl_maximal(w, None, radii, "mask")
        hb = mx.hl_maximal(w, None, radii, "brute")
        ok_h &= _same(hf, hb)
        ff = mx.sharp_maximal_2(w, None, radii, "fft-like")
        gap = np.nanmax(np.abs(ff.values - fast.values)) / max(np.nanmax(np.abs(fast.values)), 1e-300)
        fft_gap = max(fft_gap, float(gap))
    rep = vf.EstimateReport("maximal_oracle", fft_gap, {"unit": 1.0}, grid=vf.grid_info(dom))
    rep.extra.update(seeds=seeds, extra_backend_seeds=min(extra_seeds, seeds), parabolic_grid=vf.grid_info(pdom))
    out.add(rep, "fft-like relative gap")
    out.rule("elliptic mask == brute (bitwise)", ok_e, ok_e, "identical values and argmax")
    out.rule("parabolic mask == brute (bitwise)", ok_p, ok_p, "identical values and argmax")
    out.rule("hl mask == brute (bitwise)", ok_h, ok_h, "identical values and argmax")
    out.rule("fft-like matches mask", fft_gap <= 1e-9, fft_gap, "<= 1e-9 relative")
    return out


def _same(a, b) -> bool:
    return (np.array_equal(a.values, b.values, equal_nan=True)
            and np.array_equal(a.radius_argmax, b.radius_argmax, equal_nan=True)
            and np.array_equal(a.valid_mask, b.valid_mask))


def _largest_admissible(w, point, radii) -> float:
    row = mx.oscillation_at(w, point, radii)
    ok = np.isfinite(row)
    return float(np.asarray(radii.radii)[ok][-1])


def run_closed_form_oscillation(s: Settings, o: Options) -> Outcome:
    out = Outcome()
    for lvl, m in enumerate(_elliptic_grids(s, o)):
        dom = Domain.box(2, m)
        w = ScalarField.from_function(dom, lambda x1, x2: x1 + 0 * x2)
        pt = dom.nearest_node((0.0, 0.0))
        radii = _radii(s, dom)
        mf = mx.sharp_maximal_2(w, [pt], radii, s.backend)
        R = _largest_admissible(w, pt, radii)
        val, arg = float(mf.values[0]), float(mf.radius_argmax[0])
        rep = vf.EstimateReport("closed_form_oscillation", val, {"closed_form": R * R / 4},
                                grid=vf.grid_info(dom))
        rep.extra.update(r_max=R, argmax=arg)
        out.add(rep, "w = x1", lvl)
        tol = 3 * dom.h**2
        out.rule(f"x1 oscillation m={m}", abs(val - R * R / 4) <= tol, abs(val - R * R / 4), f"<= 3h^2 = {tol:.3e}")
        out.rule(f"x1 argmax m={m}", arg == R, arg, f"== r_max = {R:.6f}")

        pdom = parabolic_domain(2, m)
        wt = ScalarField.from_function(pdom, lambda t, x1, x2: t + 0 * x1 + 0 * x2)
        ppt = pdom.nearest_node((0.0, 0.0), 0.0)
        pradii = _radii(s, pdom)
        pf = mx.sharp_maximal_2_parabolic(wt, [ppt], pradii, s.backend)
        Rp = _largest_admissible(wt, ppt, pradii)
        pval, parg = float(pf.values[0]), float(pf.radius_argmax[0])
        rep = vf.EstimateReport("closed_form_oscillation", pval, {"closed_form": Rp**4 / 12},
                                grid=vf.grid_info(pdom))
        rep.extra.update(r_max=Rp, argmax=parg)
        out.add(rep, "w = t", lvl)
        ptol = 3 * (pdom.h**2 + pdom.tau)
        out.rule(f"t oscillation m={m}", abs(pval - Rp**4 / 12) <= ptol, abs(pval - Rp**4 / 12),
                 f"<= 3(h^2+tau) = {ptol:.3e}")
        out.rule(f"t argmax m={m}", parg == Rp, parg, f"== r_max = {Rp:.6f}")
    return out


# ---------------------------------------------------------------------------
# elliptic estimates


def _bump(dom, power=4):
    def fn(*xs):
        r2 = sum(x * x for x in xs)
        return np.clip(1 - r2, 0, None) ** power

    return ScalarField.from_function(dom, fn)


def p2_tolerance(m: int) -> float:
    """2e-2 at 128 nodes, shrinking like h^2."""
    return 2e-2 * (128 / m) ** 2


def run_p2_identity(s: Settings, o: Options) -> Outcome:
    out = Outcome()
    grids = o.ints("grids", (128, 256))
    errs, errs_x = [], []
    for lvl, m in enumerate(grids):
        dom = Domain.box(s.n, m)
        v = _bump(dom)
        out.keep(f"bump_m{m}", v)
        rep = out.add(vf.p2_identity_check(v), "(1-|x|^2)_+^4", lvl)
        err = abs(rep.ratio - 1)
        errs.append(err)
        tol = p2_tolerance(m)
        out.rule(f"bump |ratio-1| m={m}", err <= tol, err, f"<= {tol:.3e}")
        vx = ScalarField(dom, v.values * dom.coords()[0])
        rx = out.add(vf.p2_identity_check(vx), "(1-|x|^2)_+^4 x1", lvl)
        errs_x.append(abs(rx.ratio - 1))
    for a, b, c in zip(grids[:-1], grids[1:], _contractions(errs)):
        out.rule(f"bump error contraction {a}->{b}", 3 <= c <= 5, c, "in [3, 5]")
    for a, b, c in zip(grids[:-1], grids[1:], _contractions(errs_x)):
        out.rule(f"x1 bump error decreases {a}->{b}", c > 1, c, "> 1")
    zero = out.add(vf.p2_identity_check(ScalarField(Domain.box(s.n, grids[0]), np.zeros((grids[0],) * s.n))),
                   "v = 0", 0)
    out.rule("v = 0 flagged degenerate", zero.degenerate, zero.degenerate, "degenerate")
    return out


def run_fefferman_stein(s: Settings, o: Options) -> Outcome:
    out = Outcome()
    grids = _elliptic_grids(s, o)
    ps = o.floats("p", s.p or (1.5, 2.0, 3.0, 4.0))
    cspec = _corpus_spec(s, o)
    lows = {p: [] for p in ps}
    highs = {p: [] for p in ps}
    capped = {p: [] for p in ps}
    for lvl, m in enumerate(grids):
        dom = Domain.box(s.n, m)
        radii = _radii(s, dom)
        pts = np.argwhere(region_mask(dom, vf._origin_ball(dom, 0.5)))
        per_p = {p: [] for p in ps}
        for pair in corpus(cspec, dom):
            mf = mx.sharp_maximal_2(pair.u, pts, radii, s.backend)
            for p in ps:
                per_p[p].append(vf.fefferman_stein_report(pair.u, p, radii=radii, maximal_field=mf))
        for p in ps:
            reps = per_p[p]
            ratios = [r.ratio for r in reps]
            k = int(np.argmax(ratios))
            rep = reps[k]
            rep.extra.update(c_emp=min(ratios), C_emp=max(ratios), corpus=len(reps))
            out.add(rep, "corpus max", lvl)
            lows[p].append(min(ratios))
            highs[p].append(max(ratios))
        sing = manufactured_pair("u=(x1**2+x2**2)**(-1/8)" if s.n == 2 else
                                 "u=(x1**2+x2**2+x3**2)**(-1/8)", dom, singular_at=(0.0,) * s.n)
        mf = mx.sharp_maximal_2(sing.u, pts, radii, s.backend)
        for p in ps:
            rep = out.add(vf.fefferman_stein_report(sing.u, p, radii=radii, maximal_field=mf), "|x|^(-1/4) capped", lvl)
            capped[p].append(rep.ratio)
        one = out.add(vf.fefferman_stein_report(ScalarField(dom, np.ones(dom.shape)), 2.0, radii=radii), "w = 1", lvl)
        out.rule(f"w = 1 maximal term vanishes m={m}", one.extra["maximal_term"] <= 1e-6, one.extra["maximal_term"],
                 "<= 1e-6")
    for p in ps:
        out.rule(f"min lower ratio > 0, p={p}", min(lows[p]) > 0, min(lows[p]), "> 0")
        out.rule(f"max upper ratio finite, p={p}", bool(np.isfinite(max(highs[p]))), max(highs[p]), "finite")
        out.rule(f"lower ratio drift, p={p}", drift(lows[p]) < 0.2, drift(lows[p]), "< 0.2")
        out.rule(f"upper ratio drift, p={p}", drift(highs[p]) < 0.2, drift(highs[p]), "< 0.2")
        out.rule(f"capped singular ratios finite, p={p}", bool(np.all(np.isfinite(capped[p])) and min(capped[p]) > 0),
                 capped[p], "finite and > 0")
    return out


def _trivial_pair(recipe: str, dom) -> SolutionPair:
    return manufactured_pair(recipe, dom)


def run_pointwise(s: Settings, o: Options) -> Outcome:
    out = Outcome()
    grids = _elliptic_grids(s, o)
    cspec = _corpus_spec(s, o)
    maxima = []
    quad = "u=(" + "+".join(f"x{i + 1}**2" for i in range(s.n)) + f")/{2 * s.n}"
    for lvl, m in enumerate(grids):
        dom = Domain.box(s.n, m)
        radii = _radii(s, dom)
        pts = vf.default_points(dom)
        reps = [vf.pointwise_estimate_report(pair, pts, radii, s.backend) for pair in corpus(cspec, dom)]
        ratios = [r.ratio for r in reps]
        best = reps[int(np.argmax(ratios))]
        best.extra.pop("ratios", None)
        best.extra["corpus"] = len(reps)
        out.add(best, "corpus max", lvl)
        maxima.append(max(ratios))
        for case, recipe in (("quadratic", quad), ("harmonic x1^2-x2^2", "u=x1**2-x2**2")):
            pair = _trivial_pair(recipe, dom)
            rep = vf.pointwise_estimate_report(pair, pts, radii, s.backend)
            rep.extra.pop("ratios", None)
            out.add(rep, case, lvl)
            scale = _sharp_scale(hessian(pair.u), dom)
            out.rule(f"{case} lhs = 0, m={m}", rep.extra["max_lhs"] <= ZERO_REL * scale, rep.extra["max_lhs"],
                     f"<= {ZERO_REL:g} x mean|D2u|^2 = {ZERO_REL * scale:.3e}")
    out.rule("max ratio drift", drift(maxima) < 0.25, drift(maxima), "< 0.25")
    return out


def _singular_recipe(n: int, beta: float) -> str:
    r2 = "+".join(f"x{i + 1}**2" for i in range(n))
    a = 2 - beta
    # Δ r^a = a (a + n - 2) r^(a-2)
    return f"u=({r2})**({a}/2)/({a}*({a}+{n}-2))"


def run_cz_elliptic(s: Settings, o: Options) -> Outcome:
    out = Outcome()
    grids = _elliptic_grids(s, o)
    ps = o.floats("p", (1.5, 3.0))
    beta = o.float("beta", 0.25)
    cspec = _corpus_spec(s, o)
    smooth = {p: [] for p in ps}
    sing = {p: [] for p in ps}
    harmonic = ["u=x1**2-x2**2", "u=x1**3-3*x1*x2**2", "u=x1**4-6*x1**2*x2**2+x2**4",
                "u=x1**5-10*x1**3*x2**2+5*x1*x2**4", "u=x1**6-15*x1**4*x2**2+15*x1**2*x2**4-x2**6"]
    for lvl, m in enumerate(grids):
        dom = Domain.box(s.n, m)
        pairs = corpus(cspec, dom)
        sp = manufactured_pair(_singular_recipe(s.n, beta), dom, singular_at=(0.0,) * s.n)
        for p in ps:
            reps = [vf.cz_elliptic_report(pr, p) for pr in pairs]
            ratios = [r.ratio for r in reps]
            best = reps[int(np.argmax(ratios))]
            best.extra["corpus"] = len(reps)
            out.add(best, "corpus max", lvl)
            smooth[p].append(max(ratios))
            rep = out.add(vf.cz_elliptic_report(sp, p), f"f = |x|^-{beta} capped", lvl)
            sing[p].append(rep.ratio)
        if s.n == 2:
            quad = vf.cz_elliptic_report(manufactured_pair("u=(x1**2+x2**2)/4", dom), 2.0)
            out.add(quad, "u = |x|^2/4", lvl)
            exact = 6 / 49
            gap = abs(quad.ratio - exact) / exact
            out.rule(f"u = |x|^2/4 closed form m={m}", gap <= 0.05, gap,
                     "relative gap to 6/49 <= 0.05 (O(h) disk quadrature)")
            for rec in harmonic:
                pair = manufactured_pair(rec, dom)
                rep = out.add(vf.cz_elliptic_report(pair, 2.0), f"harmonic {rec[2:]}", lvl)
                out.rule(f"harmonic bounded {rec[2:]} m={m}", rep.ratio is not None and np.isfinite(rep.ratio),
                         rep.ratio, "finite")
    for p in ps:
        out.rule(f"smooth corpus drift p={p}", drift(smooth[p]) < 0.25, drift(smooth[p]), "< 0.25")
        out.rule(f"capped singular drift p={p}", drift(sing[p]) < 0.25, drift(sing[p]), "< 0.25")
    return out


def run_sharpness(s: Settings, o: Options) -> Outcome:
    out = Outcome()
    levels = o.ints("grids", (129, 257, 513, 1025))
    pf = o.float("p", 4.0)
    reps = vf.sharpness_demo_pinf(levels, pf)
    for lvl, rep in enumerate(reps):
        out.add(rep, "u = x1 x2 log|x|", lvl)
    fmax = max(r.extra["f_sup_all"] for r in reps)
    out.rule("|f| <= 2 at all nodes", fmax <= 2 + 1e-6, fmax, "<= 2 + 1e-6")
    ratios = [r.ratio for r in reps]
    inc = all(b > a for a, b in zip(ratios[:-1], ratios[1:]))
    out.rule("sup ratio strictly increasing", inc, ratios, "strictly increasing")
    fin = [r.extra["finite_p_ratio"] for r in reps]
    out.rule(f"p={pf} ratio drift", drift(fin) < 0.25, drift(fin), "< 0.25")
    return out


def _bump_recipe(cx: float, cy: float, k: int = 6, factor: str = "1", time: bool = False) -> str:
    d2 = f"(x1-({cx}))**2+(x2-({cy}))**2"
    body = f"Piecewise((({factor})*(1-({d2}))**{k}, {d2}<1), (0, True))"
    return f"u={'t*' if time else ''}{body}"


def _zero_pair(dom) -> SolutionPair:
    z = ScalarField(dom, np.zeros(dom.shape))
    return SolutionPair(z, z, "solved", 0.0)


def run_duality(s: Settings, o: Options) -> Outcome:
    out = Outcome()
    grids = o.ints("grids", (65, 129, 257))
    defects = []
    for lvl, m in enumerate(grids):
        dom = Domain.box(2, m)
        pu = manufactured_pair(_bump_recipe(0.3, -0.2), dom)
        pg = manufactured_pair(_bump_recipe(-0.4, 0.1, factor="1+x1"), dom)
        pv = solve_poisson(pg.f)
        rep = out.add(vf.duality_identity_check(pu, pv), "u bump, v solved", lvl)
        defects.append(rep.lhs)
        sym = out.add(vf.duality_identity_check(pu, pu), "v = u", lvl)
        out.rule(f"symmetric defect m={m}", sym.ratio <= 1e-10, sym.ratio, "<= 1e-10 relative")
        du = SolutionPair(pu.u, laplacian(pu.u), "manufactured", 0.0)
        dv = SolutionPair(pv.u, laplacian(pv.u), "solved", 0.0)
        disc = out.add(vf.duality_identity_check(du, dv), "discrete forcings", lvl)
        out.rule(f"summation by parts m={m}", disc.ratio <= 1e-10, disc.ratio, "<= 1e-10 relative")
        zero = _zero_pair(dom)
        z = out.add(vf.duality_identity_check(pu, zero), "v = 0", lvl)
        out.rule(f"v = 0 both sides vanish m={m}", z.degenerate and z.lhs == 0, z.lhs, "degenerate, defect 0")
    for a, b, c in zip(grids[:-1], grids[1:], _contractions(defects)):
        out.rule(f"defect contraction {a}->{b}", 3.4 <= c <= 4.6, c, "4 +/- 15%")
    return out


# ---------------------------------------------------------------------------
# Theta profile and blow-up


def run_theta_profile(s: Settings, o: Options) -> Outcome:
    out = Outcome()
    m = o.int("grid", 256)
    dom = Domain.box(2, m)
    radii = _radii(s, dom)
    delta = o.float("delta", 0.5)

    H3 = hessian(manufactured_pair("u=x1**3", dom).u)
    tp = vf.theta_profile([H3], radii, delta, backend=s.backend)
    R = float(tp.radii[-1])
    gap = float(np.max(np.abs(tp.theta - 9 * R * R)))
    rep = vf.EstimateReport("theta_profile", float(tp.theta[0]), {"closed_form": 9 * R * R}, grid=vf.grid_info(dom))
    rep.extra.update(r_max=R, radii=tp.radii, theta=tp.theta)
    out.add(rep, "u = x1^3")
    tol = 36 * 3 * dom.h**2
    out.rule("x1^3: theta = 9 r_max^2", gap <= tol, gap, f"<= 36*3h^2 = {tol:.3e}")

    two = vf.theta_profile([H3, H3 * 2.0], radii, delta, backend=s.backend)
    ks = sorted({k for k, _ in two.attaining} | {k for _, _, k, _ in two.selection})
    out.rule("scaled field always attains", ks == [1], ks, "attaining index == 1")

    Hq = hessian(manufactured_pair("u=x1**2+x1*x2", dom).u)
    const = vf.theta_profile([Hq], radii, delta, backend=s.backend)
    out.rule("constant Hessian degenerate", const.degenerate, const.degenerate, "degenerate")

    cdom = Domain.box(s.n, o.int("corpus_grid", 128))
    cradii = _radii(s, cdom)
    hs = [hessian(p.u) for p in corpus(_corpus_spec(s, o), cdom)]
    mono = sel = True
    for H in hs:
        prof = vf.theta_profile([H], cradii, delta, backend=s.backend)
        mono &= bool(np.all(np.diff(prof.theta) <= 0))
        sel &= prof.selection_holds()
    fam = vf.theta_profile(hs, cradii, delta, backend=s.backend)
    mono &= bool(np.all(np.diff(fam.theta) <= 0))
    sel &= fam.selection_holds()
    rep = vf.EstimateReport("theta_profile", float(fam.theta[0]), {"theta_rmax": float(fam.theta[-1])},
                            grid=vf.grid_info(cdom))
    rep.extra.update(radii=fam.radii, theta=fam.theta, selection=fam.selection, fields=len(hs))
    out.add(rep, "corpus family")
    out.rule("theta nonincreasing on every set", mono, mono, "nonincreasing")
    out.rule("selection inequality", sel, sel, "(1-delta) osc_k(rho) <= osc_km(r_m) for rho >= r_m")
    return out


def run_blowup(s: Settings, o: Options) -> Outcome:
    out = Outcome()
    delta = o.float("delta", 0.5)
    dom = Domain.box(s.n, o.int("grid", 128))
    radii = _radii(s, dom)
    worst_avg, norms, count = 0.0, [], 0
    for idx, pair in enumerate(corpus(_corpus_spec(s, o), dom)):
        prof = vf.theta_profile([hessian(pair.u)], radii, delta, backend=s.backend)
        if prof.degenerate:
            continue
        for j, (_eps, rm, _k, _osc) in enumerate(prof.selection):
            if 2 * rm / dom.h < vf.MIN_BLOWUP_NODES:
                continue
            st = vf.blowup_rescale(pair, rm, prof.normaliser(j))
            worst_avg = max(worst_avg, max(st.averages.values()))
            norms.append(st.normalisation)
            if count == 0:
                out.keep("blowup_v", st.v)
                out.keep("blowup_g", st.g)
            count += 1
    rep = vf.EstimateReport("blowup_rescale", worst_avg, {"unit": 1.0}, grid=vf.grid_info(dom))
    rep.extra.update(states=count, normalisation_min=min(norms), normalisation_max=max(norms))
    out.add(rep, "corpus")
    out.rule("vanishing averages", worst_avg <= 1e-8, worst_avg, "<= 1e-8")
    ok = all(0.49 <= v <= 0.51 for v in norms)
    out.rule("normalisation in [0.49, 0.51]", ok and count > 0, [min(norms), max(norms)], "[0.49, 0.51]")

    fine = Domain.box(2, o.int("example_grid", 256))
    fr = _radii(s, fine)
    pair = manufactured_pair("u=x1**3", fine)
    prof = vf.theta_profile([hessian(pair.u)], fr, delta, backend=s.backend)
    i = int(np.argmin(np.abs(prof.radii - 0.25)))
    rm = float(prof.radii[i])
    st = vf.blowup_rescale(pair, rm, prof.oscillations[0, i] / (1 - delta))
    rep = vf.EstimateReport("blowup_rescale", st.normalisation, {"target": 0.5}, grid=vf.grid_info(fine))
    rep.extra.update(st.to_dict())
    out.add(rep, "u = x1^3")
    out.rule("x1^3 normalisation", 0.49 <= st.normalisation <= 0.51, st.normalisation, "[0.49, 0.51]")
    q = vf.blowup_rescale(manufactured_pair("u=x1**2-3*x1*x2+2*x2+1", fine), 0.25, 1.0)
    vmax = float(np.max(np.abs(q.v.values)))
    out.rule("quadratic u: v = 0", vmax <= 1e-10, vmax, "<= 1e-10")
    out.rule("g mean vanishes", st.averages["g"] <= 1e-10, st.averages["g"], "<= 1e-10")
    return out


# ---------------------------------------------------------------------------
# parabolic


def run_pointwise_parabolic(s: Settings, o: Options) -> Outcome:
    out = Outcome()
    grids = _parabolic_grids(s, o)
    cspec = _corpus_spec(s, o, count=10)
    maxima = []
    quad = "u=t+(" + "+".join(f"x{i + 1}**2" for i in range(s.n)) + f")/{2 * s.n}"
    for lvl, m in enumerate(grids):
        dom = parabolic_domain(s.n, m)
        radii = _radii(s, dom)
        pts = vf.default_points(dom)
        reps = [vf.pointwise_parabolic_report(p, pts, radii, s.backend) for p in corpus(cspec, dom)]
        ratios = [r.ratio for r in reps]
        best = reps[int(np.argmax(ratios))]
        best.extra.pop("ratios", None)
        best.extra["corpus"] = len(reps)
        out.add(best, "corpus max", lvl)
        maxima.append(max(ratios))
        for case, recipe in (("t + |x|^2/2n", quad), ("caloric x1^2 + 2t", "u=x1**2+2*t")):
            pair = manufactured_pair(recipe, dom)
            rep = vf.pointwise_parabolic_report(pair, pts, radii, s.backend)
            rep.extra.pop("ratios", None)
            out.add(rep, case, lvl)
            scale = _sharp_scale(hessian(pair.u), dom) + _sharp_scale(vf.dt(pair.u), dom)
            out.rule(f"{case} lhs = 0, m={m}", rep.extra["max_lhs"] <= ZERO_REL * scale, rep.extra["max_lhs"],
                     f"<= {ZERO_REL:g} x scale = {ZERO_REL * scale:.3e}")
    out.rule("max ratio drift", drift(maxima) < 0.25, drift(maxima), "< 0.25")
    return out


def run_cz_parabolic(s: Settings, o: Options) -> Outcome:
    out = Outcome()
    grids = _parabolic_grids(s, o)
    ps = o.floats("p", (1.5, 3.0))
    beta = o.float("beta", 0.25)
    cspec = _corpus_spec(s, o, count=10)
    smooth = {p: [] for p in ps}
    sing = {p: [] for p in ps}
    caloric = ["u=x1**2+2*t", "u=x1*x2", "u=x1**3+6*x1*t", "u=x1**2*x2+2*x2*t", "u=x1**4+12*x1**2*t+12*t**2"]
    for lvl, m in enumerate(grids):
        dom = parabolic_domain(s.n, m)
        pairs = corpus(cspec, dom)
        sr = _singular_recipe(s.n, beta)
        sp = manufactured_pair(sr, dom, singular_at=(0.0,) * s.n)
        for p in ps:
            reps = [vf.cz_parabolic_report(pr, p) for pr in pairs]
            ratios = [r.ratio for r in reps]
            best = reps[int(np.argmax(ratios))]
            best.extra["corpus"] = len(reps)
            out.add(best, "corpus max", lvl)
            smooth[p].append(max(ratios))
            rep = out.add(vf.cz_parabolic_report(sp, p), f"f = -|x|^-{beta} capped", lvl)
            sing[p].append(rep.ratio)
        ut = manufactured_pair("u=t", dom)
        rep = out.add(vf.cz_parabolic_report(ut, 2.0), "u = t", lvl)
        half = region_measure(dom, vf._origin_cube(dom, 0.5))
        q1 = vf._origin_cube(dom, 1.0)
        mask = region_mask(dom, q1)
        tt = np.broadcast_to(dom.coords()[0], dom.shape)[mask]
        expect_rhs = float(np.sum(tt**2) * dom.cell_volume) + region_measure(dom, q1)
        gap = max(abs(rep.lhs - half) / half, abs(rep.rhs - expect_rhs) / expect_rhs)
        rep.extra.update(measure_half=half, continuum_lhs=np.pi / 16 if s.n == 2 else None)
        out.rule(f"u = t cube arithmetic m={m}", gap <= 1e-9, gap, "<= 1e-9 relative")
        if s.n == 2:
            for rec in caloric:
                rep = out.add(vf.cz_parabolic_report(manufactured_pair(rec, dom), 2.0), f"caloric {rec[2:]}", lvl)
                out.rule(f"caloric bounded {rec[2:]} m={m}", rep.ratio is not None and np.isfinite(rep.ratio),
                         rep.ratio, "finite")
    for p in ps:
        out.rule(f"smooth corpus drift p={p}", drift(smooth[p]) < 0.25, drift(smooth[p]), "< 0.25")
        out.rule(f"capped singular drift p={p}", drift(sing[p]) < 0.25, drift(sing[p]), "< 0.25")
    return out


def run_parabolic_duality(s: Settings, o: Options) -> Outcome:
    out = Outcome()
    grids = o.ints("grids", (33, 65, 129))
    defects = []
    for lvl, m in enumerate(grids):
        space = Domain.box(2, m)
        dom = SpaceTimeDomain(space, 0.0, 1.0, (m - 1) // 4 + 1)
        pu = manufactured_pair(_bump_recipe(0.3, -0.2, time=True), dom)
        pg = manufactured_pair(_bump_recipe(-0.4, 0.1, factor="1+x1", time=True), dom)
        pv = solve_heat(pg.f, ScalarField(space, np.zeros(space.shape)))
        rep = out.add(vf.parabolic_duality_check(pu, pv), "u = t bump, v heat-solved", lvl)
        defects.append(rep.lhs)
        zero = _zero_pair(dom)
        z = out.add(vf.parabolic_duality_check(zero, pv), "u = 0", lvl)
        out.rule(f"u = 0 both sides vanish m={m}", z.lhs == 0 and z.extra["lhs_integral"] == 0, z.lhs, "== 0")
        twice = vf.time_reverse(vf.time_reverse(pv.f))
        same = bool(np.array_equal(twice.values, pv.f.values))
        out.rule(f"reversal is an involution m={m}", same, same, "bitwise")
    for a, b, c in zip(grids[:-1], grids[1:], _contractions(defects)):
        out.rule(f"defect contraction {a}->{b}", 3.4 <= c <= 4.6, c, "4 +/- 15%")
    return out


def run_poly_growth(s: Settings, o: Options) -> Outcome:
    out = Outcome()
    n = 2
    max_deg = o.int("max_degree", 6)
    ladder = o.floats("R", (1.0, 1.5, 2.0, 3.0, 4.0))
    h = o.float("h", 1 / 64)
    tau = o.float("tau", 1 / 64)
    worst = 0.0
    for key in vf.monomials(n, max_deg):
        rep = out.add(vf.poly_growth_check({key: 1.0}, None, ladder, h, tau), f"monomial {key}")
        worst = max(worst, abs(rep.extra["sigma"] - 2 * rep.extra["N"]))
    out.rule(f"sigma = 2N for all monomials of degree <= {max_deg}", worst <= 0.1, worst, "|sigma - 2N| <= 0.1")
    t = vf.poly_growth_check({(0,) * n + (1,): 1.0}, None, ladder, h, tau)
    c = t.extra["constant"]
    out.rule("p = t constant", abs(c - 1 / 12) <= 0.05 / 12, c, "1/12 +/- 5%")
    const = out.add(vf.poly_growth_check({(0,) * (n + 1): 7.0}, 0, ladder, h, tau), "p = 7")
    out.rule("p = 7 degenerate", const.degenerate, const.degenerate, "degenerate")
    return out


_HARMONIC = {
    "x1": lambda x, y: x + 0 * y,
    "x1^2-x2^2": lambda x, y: x * x - y * y,
    "Re z^3": lambda x, y: x**3 - 3 * x * y * y,
    "Im z^3": lambda x, y: 3 * x * x * y - y**3,
}


def run_mean_value(s: Settings, o: Options) -> Outcome:
    out = Outcome()
    grids = o.ints("grids", (65, 129))
    centres = [(0.0, 0.0), (0.3, 0.0), (0.0, -0.3), (-0.2, 0.2), (0.25, 0.25)]
    radii = o.floats("radii", (0.25, 0.5, 0.75))
    for lvl, m in enumerate(grids):
        dom = Domain.box(2, m)
        for name, fn in _HARMONIC.items():
            rep = out.add(vf.mean_value_check(ScalarField.from_function(dom, fn), centres, radii), name, lvl)
            out.rule(f"{name} defect <= h^2, m={m}", rep.lhs <= dom.h**2, rep.lhs, f"<= h^2 = {dom.h**2:.3e}")
    return out


_GROWTH = {
    "x1": lambda x, y: x + 0 * y,
    "x1^2-x2^2": lambda x, y: x * x - y * y,
    "x1 x2": lambda x, y: x * y,
    "Re z^3": lambda x, y: x**3 - 3 * x * y * y,
    "Re z^4": lambda x, y: x**4 - 6 * x * x * y * y + y**4,
    "Im z^4": lambda x, y: 4 * x**3 * y - 4 * x * y**3,
}


def run_growth_bound(s: Settings, o: Options) -> Outcome:
    out = Outcome()
    dom = Domain.box(2, o.int("grid", 129), o.float("half_width", 3.0))
    ladder = o.floats("R", (1.0, 1.5, 2.0))
    for name, fn in _GROWTH.items():
        rep = out.add(vf.growth_bound_check(ScalarField.from_function(dom, fn), ladder), name)
        if name == "x1":
            out.rule("affine: both sides 0", rep.degenerate, rep.extra["constants"], "degenerate")
        else:
            out.rule(f"{name} constant stable", rep.extra["spread"] <= 0.05, rep.extra["spread"],
                     "relative spread <= 5%")
    return out


CATALOG = [
    Experiment("maximal_oracle", "M#w(x) = sup_r avg_{B_r(x)} |w - avg_{B_r(x)} w|^2 (fast vs exhaustive)",
               "fast mask path against the brute-force oracle", run_maximal_oracle),
    Experiment("closed_form_oscillation", "avg_{B_R} x1^2 = R^2/4 ; avg_{Q_R} t^2 = R^4/12",
               "closed-form oscillations of x1 and t", run_closed_form_oscillation),
    Experiment("p2_identity_check", "int |D^2 v|^2 = int |Lap v|^2 for v in C_c^inf",
               "ratio of the two integrals for a bump", run_p2_identity),
    Experiment("fefferman_stein_report",
               "c ||w||_Lp(B_r) <= ||(M#w)^(1/2)||_Lp(B_r) + ||w||_L1(B_r) <= C ||w||_Lp(B_r)",
               "sandwich constants over a seeded corpus", run_fefferman_stein),
    Experiment("pointwise_estimate_report",
               "M#D^2u(x) <= C(||u||^2_L2(B_1) + ||f||^2_L2(B_1) + M#f(x)), x in B_1/2",
               "pointwise sharp-function bound", run_pointwise),
    Experiment("cz_elliptic_report", "int_{B_1/2} |D^2u|^p <= C(int_{B_1} |u|^p + int_{B_1} |f|^p), Lap u = f",
               "interior W^{2,p} bound", run_cz_elliptic),
    Experiment("sharpness_demo_pinf", "u = x1 x2 log|x|: f bounded, D^2 u unbounded (p = inf fails)",
               "log growth of the sup-norm ratio", run_sharpness),
    Experiment("duality_identity_check", "int d_ij u g = int f d_ij v for Lap u = f, Lap v = g",
               "elliptic duality defect", run_duality),
    Experiment("theta_profile", "Theta(r) = sup_k sup_{rho >= r} avg_{B_rho} |D^2u_k - avg D^2u_k|^2",
               "Theta monotonicity and radius selection", run_theta_profile),
    Experiment("blowup_rescale",
               "v_m(x) = (u(r_m x) - p_m(x)) / (r_m^2 Theta_m^(1/2)), avg_{B_1} of v, grad v, D^2 v = 0",
               "rescaled blow-up sequence", run_blowup),
    Experiment("pointwise_parabolic_report",
               "M#par u_t + M#par D^2u <= C(||u||^2_L2(Q_1) + ||f||^2_L2(Q_1) + M#par f), (x,t) in Q_1/2",
               "parabolic pointwise bound", run_pointwise_parabolic),
    Experiment("cz_parabolic_report",
               "int_{Q_1/2} |D^2u|^p + |u_t|^p <= C int_{Q_1} |u|^p + |f|^p, u_t - Lap u = f",
               "interior parabolic W^{2,1}_p bound", run_cz_parabolic),
    Experiment("parabolic_duality_check", "int u_t g~ = -int f v~_t with g~, v~ reversed in time",
               "time-reversal duality defect", run_parabolic_duality),
    Experiment("poly_growth_check", "avg_{Q_R} |p - c_R|^2 = R^(2N) avg_{Q_1} |p - c_1|^2, deg_par p = N",
               "growth exponent of polynomial oscillation", run_poly_growth),
    Experiment("mean_value_check", "u(x) = avg_{B_r(x)} u for harmonic u", "lattice mean value defect",
               run_mean_value),
    Experiment("growth_bound_check", "|D^2u(x)| <= C R^(-n/2) ||D^2u||_L2(B_R), x in B_R/2, u harmonic",
               "interior growth chain for harmonic u", run_growth_bound),
]

BY_NAME = {e.name: e for e in CATALOG}


def catalog_json() -> list[dict]:
    return [{"name": e.name, "anchor": e.anchor, "summary": e.summary} for e in CATALOG]
