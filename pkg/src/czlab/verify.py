"""Measurable forms of the estimates: each function returns report objects
holding the measured left side, the named right-side terms and their ratio.

Conventions shared by every report:

* balls and cubes are centred at the origin node unless stated otherwise;
* norms are Riemann sums over nodes (see :mod:`czlab.fields`);
* a report whose right side vanishes is flagged ``degenerate`` and has no ratio.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from . import maximal as mx
from .fields import (
    Domain,
    Region,
    ScalarField,
    SpaceTimeDomain,
    dt,
    gradient,
    hessian,
    interior_mask,
    laplacian,
    lp_integral,
    lp_norm,
    ball_offsets,
    region_average,
    region_mask,
    time_offsets,
)
from .maximal import RadiusSet
from .solvers import SolutionPair

# Oscillations below this fraction of the mean square magnitude count as
# rounding noise: the variance identity cancels to about 1e-15 relative.
NOISE = 1e-12


@dataclass
class EstimateReport:
    label: str
    lhs: float
    rhs_terms: dict
    p: float | None = None
    grid: dict = field(default_factory=dict)
    points: int = 0
    seed: int | None = None
    level: int | None = None
    extra: dict = field(default_factory=dict)
    degenerate: bool = False
    ratio: float | None = None

    def __post_init__(self):
        rhs = self.rhs
        if rhs < 0 or self.lhs < 0 or not np.isfinite(rhs) or not np.isfinite(self.lhs):
            raise ValueError(f"{self.label}: sides must be finite and nonnegative")
        if rhs == 0:
            if self.lhs > 0:
                raise ValueError(f"{self.label}: positive left side with vanishing right side")
            self.degenerate = True
            self.ratio = None
        else:
            self.ratio = self.lhs / rhs

    @property
    def rhs(self) -> float:
        return float(sum(self.rhs_terms.values()))

    def to_dict(self) -> dict:
        return _jsonable({
            "label": self.label, "p": self.p, "grid": self.grid, "lhs": self.lhs,
            "rhs_terms": self.rhs_terms, "rhs": self.rhs, "ratio": self.ratio,
            "degenerate": self.degenerate, "points": self.points, "seed": self.seed,
            "level": self.level, "extra": self.extra,
        })


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def grid_info(domain) -> dict:
    info = {"n": domain.ndim_space, "m": domain.space.m, "h": domain.h}
    if isinstance(domain, SpaceTimeDomain):
        info.update(nt=domain.nt, tau=domain.tau)
    return info


def _origin_ball(domain, r: float) -> Region:
    return Region.ball((0.0,) * domain.ndim_space, r)


def _origin_cube(domain, r: float) -> Region:
    return Region.cube((0.0,) * domain.ndim_space, 0.0, r)


def snap_points(domain, coords) -> np.ndarray:
    """Nearest-node indices for physical points (``(t, x...)`` tuples on space-time grids)."""
    out = []
    for c in coords:
        c = tuple(float(v) for v in c)
        if isinstance(domain, SpaceTimeDomain):
            out.append(domain.nearest_node(c[1:], c[0]))
        else:
            out.append(domain.nearest_node(c))
    return np.array(sorted(set(out)), dtype=int)


def default_points(domain, radius: float = 0.5) -> np.ndarray:
    """Sample nodes in ``B_{radius}`` (or ``Q_{radius}``): the centre plus two rings.

    Elliptic: the centre, 8 points at 0.4·radius and 16 at 0.8·radius (25 in
    all).  Parabolic: the centre and 8 points at 0.5·radius, on three time
    levels inside the half-open cube.
    """
    n = domain.ndim_space

    def ring(rho, k):
        pts = []
        for j in range(k):
            a = 2 * np.pi * j / k
            v = np.zeros(n)
            if n == 1:
                v[0] = rho * (1 if j % 2 == 0 else -1)
            else:
                v[0], v[1] = rho * np.cos(a), rho * np.sin(a)
            pts.append(tuple(v))
        return pts

    if isinstance(domain, SpaceTimeDomain):
        space = [(0.0,) * n] + ring(0.5 * radius, 8)
        half = 0.5 * radius * radius
        times = (-0.5 * half, 0.0, 0.5 * half)
        pts = [(t,) + x for t in times for x in space]
    else:
        pts = [(0.0,) * n] + ring(0.4 * radius, 8) + ring(0.8 * radius, 16)
    return snap_points(domain, pts)


def _points_inside(domain, pts: np.ndarray, radius: float) -> None:
    for idx in pts:
        idx = tuple(int(i) for i in idx)
        if isinstance(domain, SpaceTimeDomain):
            t = domain.times()[idx[0]]
            x = domain.space.node(idx[1:])
            half = 0.5 * radius * radius
            ok = np.dot(x, x) < radius * radius and -half < t <= half
        else:
            x = domain.node(idx)
            ok = np.dot(x, x) < radius * radius
        if not ok:
            raise ValueError(f"sample node {idx} lies outside the radius-{radius} region")


# ---------------------------------------------------------------------------
# p = 2 identity and Fefferman-Stein sandwich


def _boundary_ring_max(w: ScalarField, width: int) -> float:
    """Largest |w| within ``width`` nodes of the spatial boundary (all time slices)."""
    inner = interior_mask(w.domain, margin=width, time_margin=0)
    return float(np.max(np.abs(w.values[~inner]))) if np.any(~inner) else 0.0


def p2_identity_check(v: ScalarField, support_tol: float = 1e-12) -> EstimateReport:
    """Ratio of ``∫|D²v|²`` to ``∫|Δv|²`` over the whole box for compactly supported ``v``."""
    if isinstance(v.domain, SpaceTimeDomain):
        raise ValueError("the identity is spatial")
    edge = _boundary_ring_max(v, 3)
    if edge > support_tol:
        raise ValueError(f"field is not compactly supported in the box (edge values up to {edge:.3e})")
    H = hessian(v)
    lap = laplacian(v)
    num = lp_integral(H, None, 2)
    den = lp_integral(lap, None, 2)
    return EstimateReport("p2_identity_check", num, {"laplacian_l2sq": den}, p=2.0,
                          grid=grid_info(v.domain))


def fefferman_stein_report(w: ScalarField, p: float, r: float = 0.5, radii: RadiusSet | None = None,
                           backend: str = "mask", maximal_field=None) -> EstimateReport:
    """Sandwich quantities for ``‖w‖_p`` against ``‖(M#w)^{1/2}‖_p + ‖w‖_1`` on ``B_r``.

    ``ratio`` is middle/‖w‖_p; over a family its minimum estimates the lower
    constant and its maximum the upper one.  ``maximal_field`` lets callers
    reuse one maximal evaluation across several exponents.
    """
    if not 1 < p < np.inf:
        raise ValueError("p must lie in (1, inf)")
    domain = w.domain
    reg = _origin_ball(domain, r)
    mask = region_mask(domain, reg)
    if maximal_field is None:
        pts = np.argwhere(mask)
        maximal_field = mx.sharp_maximal_2(w, pts, radii, backend)
    vals = maximal_field.values
    if not np.all(maximal_field.valid_mask):
        raise ValueError("some nodes of the region have no admissible radius")
    root = np.sqrt(vals)
    maxterm = float((np.sum(root**p) * domain.cell_volume) ** (1 / p))
    l1 = lp_norm(w, reg, 1)
    wp = lp_norm(w, reg, p)
    rep = EstimateReport("fefferman_stein_report", maxterm + l1, {"lp_norm": wp}, p=p,
                         grid=grid_info(domain), points=len(vals))
    rep.extra.update(maximal_term=maxterm, l1_norm=l1, lp_norm=wp)
    if rep.ratio is not None:
        rep.extra.update(lower_ratio=rep.ratio, upper_ratio=rep.ratio)
    return rep


# ---------------------------------------------------------------------------
# pointwise and integral estimates


def pointwise_estimate_report(pair: SolutionPair, points=None, radii: RadiusSet | None = None,
                              backend: str = "mask") -> EstimateReport:
    """Pointwise comparison of ``M#D²u(x)`` with ``‖u‖² + ‖f‖² + M#f(x)`` over ``B_1`` norms.

    Reports the sample point with the largest ratio; per-point values are in
    ``extra``.
    """
    domain = pair.domain
    if isinstance(domain, SpaceTimeDomain):
        raise ValueError("use pointwise_parabolic_report for space-time pairs")
    pts = default_points(domain) if points is None else np.asarray(points, dtype=int)
    _points_inside(domain, pts, 0.5)
    H = hessian(pair.u)
    lhs = _valid(mx.sharp_maximal_2(H, pts, radii, backend))
    mf = _valid(mx.sharp_maximal_2(pair.f, pts, radii, backend))
    b1 = _origin_ball(domain, 1.0)
    return _pointwise(domain, "pointwise_estimate_report", lhs, mf, pts,
                      lp_norm(pair.u, b1, 2) ** 2, lp_norm(pair.f, b1, 2) ** 2)


def _valid(mf) -> np.ndarray:
    if not np.all(mf.valid_mask):
        bad = mf.points[~mf.valid_mask][0]
        raise ValueError(f"node {tuple(bad)} has no admissible radius")
    return mf.values


def _pointwise(domain, label, lhs, mterm, pts, u2: float, f2: float) -> EstimateReport:
    rhs = u2 + f2 + mterm
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(rhs > 0, lhs / np.where(rhs > 0, rhs, 1.0), 0.0)
    k = int(np.argmax(ratios))
    rep = EstimateReport(label, float(lhs[k]), {"u_l2sq": u2, "f_l2sq": f2, "f_sharp": float(mterm[k])},
                         grid=grid_info(domain), points=len(pts))
    rep.extra.update(point=[int(i) for i in pts[k]], max_lhs=float(np.max(lhs)),
                     ratios=[float(r) for r in ratios])
    return rep


def cz_elliptic_report(pair: SolutionPair, p: float) -> EstimateReport:
    """``∫_{B_1/2}|D²u|^p`` against ``∫_{B_1}|u|^p + ∫_{B_1}|f|^p``."""
    if not 1 < p < np.inf:
        raise ValueError("p must lie in (1, inf)")
    domain = pair.domain
    lhs = lp_integral(hessian(pair.u), _origin_ball(domain, 0.5), p)
    b1 = _origin_ball(domain, 1.0)
    terms = {"u_lp": lp_integral(pair.u, b1, p), "f_lp": lp_integral(pair.f, b1, p)}
    return EstimateReport("cz_elliptic_report", lhs, terms, p=p, grid=grid_info(domain))


def sharpness_demo_pinf(levels: Sequence[int] = (129, 257, 513, 1025), p_finite: float = 4.0,
                        half_width: float = 2.0) -> list[EstimateReport]:
    """``‖D²u‖_∞(B_1/2) / ‖f‖_∞(B_1)`` for ``u = x1 x2 log|x|`` across refinements.

    Odd node counts put a node at the origin, where ``u`` is capped.  Each
    level also reports the finite-exponent ratio.
    """
    from .solvers import manufactured_pair

    out = []
    for lvl, m in enumerate(levels):
        domain = Domain.box(2, m, half_width)
        pair = manufactured_pair("u=x1*x2*log(sqrt(x1**2+x2**2))", domain, singular_at=(0.0, 0.0))
        dmax = lp_norm(hessian(pair.u), _origin_ball(domain, 0.5), np.inf)
        fmax = lp_norm(pair.f, _origin_ball(domain, 1.0), np.inf)
        rep = EstimateReport("sharpness_demo_pinf", dmax, {"f_sup": fmax}, p=np.inf,
                             grid=grid_info(domain), level=lvl)
        fin = cz_elliptic_report(pair, p_finite)
        rep.extra.update(f_sup_all=float(np.max(np.abs(pair.f.values))), finite_p=p_finite,
                         finite_p_ratio=fin.ratio)
        out.append(rep)
    return out


# ---------------------------------------------------------------------------
# duality


def _compact(w: ScalarField, what: str, tol: float = 1e-12) -> None:
    edge = _boundary_ring_max(w, 1)
    if edge > tol:
        raise ValueError(f"{what} is not compactly supported (boundary values up to {edge:.3e})")


def duality_identity_check(pu: SolutionPair, pv: SolutionPair) -> EstimateReport:
    """Defect of ``∫∂ij u·g = ∫f·∂ij v`` over all entries (pairs ``(u,f)``, ``(v,g)``).

    ``lhs`` is the largest defect; the right side is the product-of-norms
    scale ``‖D²u‖‖g‖ + ‖f‖‖D²v‖`` (L², whole box).
    """
    if pu.domain != pv.domain:
        raise ValueError("pairs must share a grid")
    _compact(pu.u, "u")
    _compact(pv.u, "v")
    dom = pu.domain
    Hu, Hv = hessian(pu.u), hessian(pv.u)
    g, f = pv.f.values, pu.f.values
    vol = dom.cell_volume
    defects = {}
    for k, (i, j) in enumerate(Hu.pairs):
        a = float(np.sum(Hu.values[k] * g) * vol)
        b = float(np.sum(f * Hv.values[k]) * vol)
        defects[f"{i + 1}{j + 1}"] = abs(a - b)
    scale = (lp_norm(Hu, None, 2) * lp_norm(pv.f, None, 2)
             + lp_norm(pu.f, None, 2) * lp_norm(Hv, None, 2))
    rep = EstimateReport("duality_identity_check", max(defects.values()), {"scale": scale},
                         grid=grid_info(dom))
    rep.extra.update(defects=defects)
    return rep


def time_reverse(w: ScalarField) -> ScalarField:
    """``w(x, t) -> w(x, T - t)`` on the node grid (an exact involution)."""
    if not isinstance(w.domain, SpaceTimeDomain):
        raise ValueError("time reversal needs a space-time field")
    return ScalarField(w.domain, w.values[::-1])


def _trapezoid_weights(nt: int) -> np.ndarray:
    wt = np.ones(nt)
    wt[0] = wt[-1] = 0.5
    return wt


def parabolic_duality_check(pu: SolutionPair, pv: SolutionPair, tol: float = 1e-12) -> EstimateReport:
    """Defect of ``∫∂t u·g̃ = -∫f·∂t ṽ`` with ``g̃, ṽ`` reversed in time.

    Both pairs need zero initial data and compact spatial support.  Time
    integrals use trapezoid weights.
    """
    dom = pu.domain
    if not isinstance(dom, SpaceTimeDomain) or pv.domain != dom:
        raise ValueError("pairs must share a space-time grid")
    for w, name in ((pu.u, "u"), (pv.u, "v")):
        if np.max(np.abs(w.values[0])) > tol:
            raise ValueError(f"{name} has nonzero initial data")
        _compact(w, name, tol)
    wt = _trapezoid_weights(dom.nt).reshape((-1,) + (1,) * dom.n)
    ut = dt(pu.u).values
    vr = time_reverse(pv.u)
    gr = time_reverse(pv.f).values
    vrt = dt(vr).values
    vol = dom.cell_volume
    a = float(np.sum(wt * ut * gr) * vol)
    b = float(-np.sum(wt * pu.f.values * vrt) * vol)

    def l2(x):
        return float(np.sqrt(np.sum(wt * x * x) * vol))

    scale = l2(ut) * l2(gr) + l2(pu.f.values) * l2(vrt)
    rep = EstimateReport("parabolic_duality_check", abs(a - b), {"scale": scale}, grid=grid_info(dom))
    rep.extra.update(lhs_integral=a, rhs_integral=b)
    return rep


# ---------------------------------------------------------------------------
# Theta profile and blow-up


@dataclass
class ThetaProfile:
    radii: np.ndarray
    theta: np.ndarray
    oscillations: np.ndarray  # (fields, radii), NaN where inadmissible
    attaining: list  # per radius: (k, rho) attaining theta
    selection: list  # (eps, r_m, k_m, osc) for eps in descending order
    delta: float
    degenerate: bool

    def normaliser(self, index: int) -> float:
        """Scale for the blow-up at selection ``index``: oscillation / (1 - delta)."""
        if self.degenerate:
            raise ValueError("degenerate profile has no blow-up scale")
        return self.selection[index][3] / (1.0 - self.delta)

    def selection_holds(self) -> bool:
        """(1-δ)·osc_k(ρ) <= osc_{k_m}(r_m) for every field k and radius ρ >= r_m."""
        for _eps, rm, _km, osc in self.selection:
            cols = self.radii >= rm
            others = self.oscillations[:, cols]
            if np.any((1 - self.delta) * others[np.isfinite(others)] > osc):
                return False
        return True

    def to_dict(self) -> dict:
        return _jsonable({"radii": self.radii, "theta": self.theta, "attaining": self.attaining,
                          "selection": self.selection, "delta": self.delta,
                          "degenerate": self.degenerate})


def theta_profile(fields, radii: RadiusSet | None = None, delta: float = 0.5, point=None,
                  backend: str = "mask") -> ThetaProfile:
    """Θ(r) = max over fields and radii ρ >= r of the oscillation at ``point``.

    Each entry of ``fields`` is a field or a sequence of fields on one grid
    whose oscillations are added (e.g. ``[D²u, ∂t u]`` in parabolic mode).
    The selection walks the radii from large to small: for each ``eps`` it
    takes the smallest ρ >= eps whose best field reaches ``(1-δ)Θ(eps)``.
    """
    if not fields:
        raise ValueError("theta_profile needs at least one field")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    domain = mx._domain_of(fields[0])
    if radii is None:
        radii = RadiusSet.geometric(domain)
    if point is None:
        point = (domain.nt // 2,) + domain.space.nearest_node((0.0,) * domain.n) \
            if isinstance(domain, SpaceTimeDomain) else domain.nearest_node((0.0,) * domain.n)
    table = np.vstack([mx.oscillation_at(f, point, radii, backend) for f in fields])
    rs = np.asarray(radii.radii)
    ok = np.any(np.isfinite(table), axis=0)
    if not np.any(ok):
        raise ValueError("no admissible radius at the profile point")
    table, rs = table[:, ok], rs[ok]
    # Θ at radius index i: running max from the right
    best = np.nanmax(table, axis=0)
    theta = np.maximum.accumulate(best[::-1])[::-1]
    attaining = []
    for i in range(len(rs)):
        j = i + int(np.argmax(best[i:] >= theta[i]))
        k = int(np.argmax(table[:, j] >= theta[i]))
        attaining.append((k, float(rs[j])))
    size = _field_scale(fields)
    degenerate = bool(theta[0] <= NOISE * max(size, 1e-300))
    selection = []
    if not degenerate:
        for i in range(len(rs) - 1, -1, -1):
            target = (1 - delta) * theta[i]
            j = i + int(np.argmax(best[i:] >= target))
            k = int(np.argmax(table[:, j] >= target))
            selection.append((float(rs[i]), float(rs[j]), k, float(table[k, j])))
    return ThetaProfile(rs, theta, table, attaining, selection, delta, degenerate)


def _field_scale(fields) -> float:
    """Largest mean square magnitude among the inputs (sets the noise floor)."""
    out = 0.0
    for f in fields:
        comps = mx._components(f)
        out = max(out, float(sum(wt * np.mean(c * c) for c, wt in comps)))
    return out


@dataclass
class BlowupState:
    r_m: float
    theta_m: float
    v: ScalarField
    g: ScalarField
    coefficients: dict
    mode: str
    averages: dict  # name -> largest absolute B1/Q1 average after subtraction
    normalisation: float  # ⨏_{B1}|D²v|² (plus |∂t v|² in parabolic mode)
    equation_defect: float  # max |Δv - g| (or |∂t v - Δv - g|) inside B1/Q1
    v_l2_b2: float

    def to_dict(self) -> dict:
        return _jsonable({"r_m": self.r_m, "theta_m": self.theta_m, "mode": self.mode,
                          "coefficients": self.coefficients, "averages": self.averages,
                          "normalisation": self.normalisation,
                          "equation_defect": self.equation_defect, "v_l2_b2": self.v_l2_b2})


MIN_BLOWUP_NODES = 16


def _rescaled_window(space: Domain, centre_idx, r: float, reach: float):
    """Node window around ``centre_idx`` covering ``B_{reach*r}``, clipped to the grid."""
    h = space.h
    K = int(np.ceil(reach * r / h)) + 2
    K = min([K] + [min(c, space.m - 1 - c) for c in centre_idx])
    return K


def resample(w: ScalarField, centre, r: float, target) -> np.ndarray:
    """Multilinear interpolation of ``w(centre + r x)`` (``w(x0 + r x, t0 + r² t)``) at ``target`` nodes."""
    dom = w.domain
    if isinstance(dom, SpaceTimeDomain):
        axes = [dom.times()] + dom.space.axes()
        x0 = np.asarray(centre, dtype=float)
        tcoords = target.coords()
        pts = [x0[0] + r * r * tcoords[0]] + [x0[i + 1] + r * tcoords[i + 1] for i in range(dom.n)]
    else:
        axes = dom.axes()
        x0 = np.asarray(centre, dtype=float)
        pts = [x0[i] + r * c for i, c in enumerate(target.coords())]
    pts = [np.broadcast_to(p, target.shape) for p in pts]
    interp = RegularGridInterpolator(axes, w.values, method="linear", bounds_error=True)
    flat = np.stack([p.ravel() for p in pts], axis=-1)
    # snap coordinates that lie within rounding of a grid line onto it
    for a, ax in enumerate(axes):
        step = ax[1] - ax[0]
        q = (flat[:, a] - ax[0]) / step
        near = np.abs(q - np.round(q)) < 1e-9
        flat[near, a] = ax[0] + np.round(q[near]) * step
        flat[:, a] = np.clip(flat[:, a], ax[0], ax[-1])
    return interp(flat).reshape(target.shape)


def blowup_rescale(pair: SolutionPair, r_m: float, theta_m: float, mode: str | None = None,
                   centre=None) -> BlowupState:
    """Zoom ``pair`` by ``r_m`` around ``centre`` and normalise by ``Θ_m``.

    The rescaled grid is aligned with the original nodes (spacing ``h/r_m``,
    and ``τ/r_m²`` in time), so interpolation reproduces node values.  The
    polynomial ``p_m`` is found by moment matching, in the order: Hessian
    average, time-derivative average, gradient average, mean.
    """
    dom = pair.domain
    parabolic = isinstance(dom, SpaceTimeDomain)
    if mode is None:
        mode = "parabolic" if parabolic else "elliptic"
    if (mode == "parabolic") != parabolic:
        raise ValueError(f"mode {mode!r} does not match the pair's grid")
    if not theta_m > 0:
        raise ValueError("Θ_m must be positive")
    space = dom.space
    h = space.h
    if 2 * r_m / h < MIN_BLOWUP_NODES:
        raise ValueError(f"r_m={r_m} leaves fewer than {MIN_BLOWUP_NODES} nodes across B_r (h={h})")
    n = space.n
    if centre is None:
        centre = (0.0,) * n if not parabolic else (0.0,) * (n + 1)
    if parabolic:
        cidx = dom.nearest_node(centre[1:], centre[0])
        c0 = np.concatenate([[dom.times()[cidx[0]]], space.node(cidx[1:])])
        sidx = cidx[1:]
    else:
        cidx = space.nearest_node(centre)
        c0 = space.node(cidx)
        sidx = cidx
    K = _rescaled_window(space, sidx, r_m, 2.0)
    hr = h / r_m
    if K * hr <= 1.0 + 2 * hr:
        raise ValueError("the grid does not extend past the unit ball after rescaling")
    newspace = Domain(n, (-K * hr,) * n, (K * hr,) * n, 2 * K + 1)
    if parabolic:
        tau = dom.tau
        J = int(np.ceil(2.0 * r_m * r_m / tau)) + 2
        J = min(J, cidx[0], dom.nt - 1 - cidx[0])
        tr = tau / (r_m * r_m)
        if J * tr <= 0.5 + 2 * tr:
            raise ValueError("the time window does not cover the unit cube after rescaling")
        target = SpaceTimeDomain(newspace, -J * tr, J * tr, 2 * J + 1)
        unit = _origin_cube(target, 1.0)
        big = _origin_cube(target, min(2.0, K * hr, np.sqrt(2 * J * tr)))
    else:
        target = newspace
        unit = _origin_ball(target, 1.0)
        big = _origin_ball(target, min(2.0, K * hr))
    U = resample(pair.u, c0, r_m, target)
    F = resample(pair.f, c0, r_m, target)
    coords = target.coords()
    xs = coords[1:] if parabolic else coords
    coeffs = {}

    # quadratic part from the mean Hessian
    C = region_average(hessian(ScalarField(target, U)), unit)
    quad = sum(0.5 * C[i, j] * xs[i] * xs[j] for i in range(n) for j in range(n))
    U = U - quad
    coeffs["hessian"] = C.tolist()
    if parabolic:
        e = region_average(dt(ScalarField(target, U)), unit)
        U = U - e * coords[0]
        coeffs["time"] = float(e)
    grads = gradient(ScalarField(target, U))
    b = [region_average(gi, unit) for gi in grads]
    U = U - sum(bi * xi for bi, xi in zip(b, xs))
    coeffs["gradient"] = [float(v) for v in b]
    a = region_average(ScalarField(target, np.broadcast_to(U, target.shape)), unit)
    U = U - a
    coeffs["constant"] = float(a)

    root = np.sqrt(theta_m)
    v = ScalarField(target, np.broadcast_to(U / (r_m * r_m * root), target.shape))
    fbar = region_average(ScalarField(target, F), unit)
    g = ScalarField(target, (F - fbar) / root)

    Hv = hessian(v)
    averages = {"v": abs(region_average(v, unit)),
                "grad": max(abs(region_average(gi, unit)) for gi in gradient(v)),
                "hessian": float(np.max(np.abs(region_average(Hv, unit)))),
                "g": abs(region_average(g, unit))}
    umask = region_mask(target, unit)
    norm = float(np.sum(Hv.magnitude()[umask] ** 2) / np.count_nonzero(umask))
    if parabolic:
        vt = dt(v)
        averages["dt"] = abs(region_average(vt, unit))
        norm += float(np.sum(vt.values[umask] ** 2) / np.count_nonzero(umask))
        resid = vt.values - laplacian(v).values - g.values
    else:
        resid = laplacian(v).values - g.values
    defect = float(np.max(np.abs(resid[umask])))
    v_l2 = lp_norm(v, big, 2)
    return BlowupState(r_m, theta_m, v, g, coeffs, mode, averages, norm, defect, v_l2)


# ---------------------------------------------------------------------------
# parabolic estimates


def pointwise_parabolic_report(pair: SolutionPair, points=None, radii: RadiusSet | None = None,
                               backend: str = "mask") -> EstimateReport:
    """Parabolic pointwise comparison with cube oscillations of ``∂t u`` and ``D²u``."""
    domain = pair.domain
    if not isinstance(domain, SpaceTimeDomain):
        raise ValueError("needs a space-time pair")
    pts = default_points(domain) if points is None else np.asarray(points, dtype=int)
    _points_inside(domain, pts, 0.5)
    mt = _valid(mx.sharp_maximal_2_parabolic(dt(pair.u), pts, radii, backend))
    mh = _valid(mx.sharp_maximal_2_parabolic(hessian(pair.u), pts, radii, backend))
    mf = _valid(mx.sharp_maximal_2_parabolic(pair.f, pts, radii, backend))
    q1 = _origin_cube(domain, 1.0)
    nu = lp_norm(pair.u, q1, 2) ** 2
    nf = lp_norm(pair.f, q1, 2) ** 2
    return _pointwise(domain, "pointwise_parabolic_report", mt + mh, mf, pts, nu, nf)


def cz_parabolic_report(pair: SolutionPair, p: float) -> EstimateReport:
    """``∫_{Q_1/2}|D²u|^p + |∂t u|^p`` against ``∫_{Q_1}|u|^p + |f|^p``."""
    if not 1 < p < np.inf:
        raise ValueError("p must lie in (1, inf)")
    domain = pair.domain
    if not isinstance(domain, SpaceTimeDomain):
        raise ValueError("needs a space-time pair")
    half = _origin_cube(domain, 0.5)
    q1 = _origin_cube(domain, 1.0)
    lhs = lp_integral(hessian(pair.u), half, p) + lp_integral(dt(pair.u), half, p)
    terms = {"u_lp": lp_integral(pair.u, q1, p), "f_lp": lp_integral(pair.f, q1, p)}
    return EstimateReport("cz_parabolic_report", lhs, terms, p=p, grid=grid_info(domain))


# ---------------------------------------------------------------------------
# polynomial growth and harmonic checks


def parabolic_degree(coeffs: dict) -> int:
    """Max of ``|a| + 2b`` over monomials ``x^a t^b`` with nonzero coefficient."""
    degs = [sum(k[:-1]) + 2 * k[-1] for k, c in coeffs.items() if c != 0]
    return max(degs) if degs else 0


def eval_polynomial(coeffs: dict, domain: SpaceTimeDomain) -> ScalarField:
    """Sample ``Σ c x^a t^b``; keys are exponent tuples ``(a_1, ..., a_n, b)``."""
    coords = domain.coords()
    t, xs = coords[0], coords[1:]
    out = np.zeros(domain.shape)
    for key, c in sorted(coeffs.items()):
        if len(key) != domain.n + 1:
            raise ValueError(f"monomial {key} does not match dimension {domain.n}")
        term = c * t ** key[-1]
        for x, a in zip(xs, key[:-1]):
            term = term * x**a
        out = out + term
    return ScalarField(domain, out)


def cube_oscillation(coeffs: dict, R: float, h: float, tau: float) -> tuple[float, float]:
    """``(⨏_{Q_R}|p - p̄|², ⨏_{Q_R}p²)`` over the lattice nodes of the origin cube.

    Uses the same node set as a sampled field would (strict ball, half-open
    time interval) but sums monomial by monomial: every product of two terms
    splits into a ball moment times an interval moment, so fine lattices stay
    cheap.
    """
    keys = sorted(k for k, c in coeffs.items() if c != 0)
    if not keys:
        return 0.0, 0.0
    n = len(keys[0]) - 1
    X = ball_offsets(n, h, R) * h
    T = time_offsets(tau, R) * tau
    c = np.array([coeffs[k] for k in keys])
    S = np.stack([np.prod(X ** np.array(k[:-1]), axis=1) for k in keys])  # (K, P)
    Tm = np.stack([T ** k[-1] for k in keys])  # (K, J)
    P, J = X.shape[0], T.shape[0]
    mean = float(c @ ((S.sum(axis=1) / P) * (Tm.sum(axis=1) / J)))
    gram = (S @ S.T / P) * (Tm @ Tm.T / J)
    second = float(c @ gram @ c)
    return max(second - mean * mean, 0.0), second


def poly_growth_check(coeffs: dict, N: int | None = None, R_ladder=(1.0, 1.5, 2.0, 3.0, 4.0),
                      h: float = 1 / 64, tau: float = 1 / 64) -> EstimateReport:
    """Fit ``⨏_{Q_R}|p - c_R|² ~ c R^σ`` over the ladder; σ should equal ``2N``.

    ``coeffs`` maps exponent tuples ``(a_1, ..., a_n, b)`` of ``x^a t^b`` to
    coefficients; ``c_R`` is the cube mean.  The lattice has spacing ``h`` in
    space and ``tau`` in time.
    """
    if len(R_ladder) < 3:
        raise ValueError("the R ladder needs at least 3 values")
    if not coeffs:
        raise ValueError("empty polynomial")
    deg = parabolic_degree(coeffs)
    if N is None:
        N = deg
    n = len(next(iter(coeffs))) - 1
    vals = [cube_oscillation(coeffs, R, h, tau) for R in R_ladder]
    osc = np.array([v[0] for v in vals])
    scale = max(v[1] for v in vals) + 1e-300
    grid = {"n": n, "h": h, "tau": tau}
    rep_extra = {"N": N, "parabolic_degree": deg, "R": list(R_ladder), "oscillation": osc.tolist()}
    if np.all(osc <= NOISE * scale):
        rep = EstimateReport("poly_growth_check", 0.0, {"target": 0.0}, grid=grid)
        rep.extra.update(rep_extra, sigma=None, constant=None)
        return rep
    if np.any(osc <= 0):
        raise ValueError("oscillation vanishes on part of the ladder")
    sigma, logc = np.polyfit(np.log(R_ladder), np.log(osc), 1)
    rep = EstimateReport("poly_growth_check", float(sigma), {"target": float(2 * N)}, grid=grid)
    rep.extra.update(rep_extra, sigma=float(sigma), constant=float(np.exp(logc)))
    return rep


def monomials(n: int, max_degree: int) -> list[tuple]:
    """All exponent tuples ``(a_1..a_n, b)`` of parabolic degree 1..max_degree."""
    out = []
    for key in itertools.product(range(max_degree + 1), repeat=n + 1):
        d = sum(key[:-1]) + 2 * key[-1]
        if 1 <= d <= max_degree:
            out.append(key)
    return sorted(out, key=lambda k: (sum(k[:-1]) + 2 * k[-1], k))


def _harmonic_check(u: ScalarField, mask: np.ndarray, rel_tol: float, abs_tol: float) -> float:
    lap = np.abs(laplacian(u).values[mask])
    H = hessian(u).magnitude()[mask]
    bound = max(abs_tol, rel_tol * float(np.max(H)) if H.size else 0.0)
    worst = float(np.max(lap)) if lap.size else 0.0
    if worst > bound:
        raise ValueError(f"field is not harmonic to tolerance ({worst:.3e} > {bound:.3e})")
    return worst


def mean_value_check(u: ScalarField, centres, radii, harmonic_tol: float = 1e-8) -> EstimateReport:
    """``|u(x) - ū_{B_r(x)}|`` over centre nodes and radii, measured against ``h²``."""
    dom = u.domain
    if isinstance(dom, SpaceTimeDomain):
        raise ValueError("mean value check is spatial")
    idx = snap_points(dom, centres)
    union = np.zeros(dom.shape, dtype=bool)
    defects = []
    for c in idx:
        x = dom.node(c)
        for r in radii:
            reg = Region.ball(tuple(x), r)
            mask = region_mask(dom, reg)
            if not interior_mask(dom, 1)[mask].all():
                raise ValueError(f"ball of radius {r} at {tuple(x)} touches the box boundary")
            union |= mask
            defects.append(abs(float(u.values[tuple(c)]) - region_average(u, reg)))
    lap = _harmonic_check(u, union, 0.0, harmonic_tol)
    rep = EstimateReport("mean_value_check", max(defects), {"h2": dom.h**2}, grid=grid_info(dom),
                         points=len(defects))
    rep.extra.update(defects=defects, laplacian_max=lap)
    return rep


def growth_bound_check(u: ScalarField, R_ladder=(1.0, 1.5, 2.0), harmonic_rel_tol: float = 1e-2) -> EstimateReport:
    """Smallest C with ``|D²u(x)| <= C R^{-n/2} ‖D²u‖_{L²(B_R)}`` for nodes ``x`` in ``B_{R/2}``.

    Harmonicity is checked relative to ``max|D²u|`` because the discrete
    Laplacian of a degree-4 harmonic polynomial is a nonzero ``O(h²)`` term.
    """
    dom = u.domain
    if isinstance(dom, SpaceTimeDomain):
        raise ValueError("growth bound check is spatial")
    n = dom.n
    H = hessian(u)
    mag = H.magnitude()
    union = region_mask(dom, _origin_ball(dom, max(R_ladder)))
    if not interior_mask(dom, 1)[union].all():
        raise ValueError("largest ball touches the box boundary")
    _harmonic_check(u, union, harmonic_rel_tol, 1e-8)
    consts = []
    for R in R_ladder:
        norm = lp_norm(H, _origin_ball(dom, R), 2)
        inner = region_mask(dom, _origin_ball(dom, R / 2))
        lhs = float(np.max(mag[inner]))
        rhs = R ** (-n / 2) * norm
        if rhs == 0:
            if lhs > 0:
                raise ValueError("positive Hessian with vanishing L2 norm")
            consts.append(0.0)
        else:
            consts.append(lhs / rhs)
    C = max(consts)
    rep = EstimateReport("growth_bound_check", C, {"unit": 1.0}, grid=grid_info(dom))
    if all(c == 0.0 for c in consts):
        rep = EstimateReport("growth_bound_check", 0.0, {"unit": 0.0}, grid=grid_info(dom))
    spread = (max(consts) - min(consts)) / max(consts) if max(consts) > 0 else 0.0
    rep.extra.update(R=list(R_ladder), constants=consts, spread=spread)
    return rep
