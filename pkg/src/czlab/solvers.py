"""Solution pairs ``(u, f)`` for ``Δu = f`` and ``∂t u - Δu = f``.

Pairs come from three sources: analytic recipes (the forcing is derived
symbolically), finite-difference solves on the full box with Dirichlet data,
and a seeded corpus of random smooth functions.  Every pair carries the
residual actually measured on the grid.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .fields import (
    AnyDomain,
    Domain,
    ScalarField,
    SpaceTimeDomain,
    dt,
    interior_mask,
    laplacian,
)


class ConvergenceError(RuntimeError):
    """Conjugate gradients hit the iteration cap."""


@dataclass(frozen=True, eq=False)
class SolutionPair:
    u: ScalarField
    f: ScalarField
    provenance: str
    residual: float
    meta: dict = field(default_factory=dict)

    @property
    def domain(self) -> AnyDomain:
        return self.u.domain

    @property
    def is_parabolic(self) -> bool:
        return isinstance(self.u.domain, SpaceTimeDomain)

    def scaled(self, lam: float) -> "SolutionPair":
        return SolutionPair(self.u * lam, self.f * lam, self.provenance, abs(lam) * self.residual,
                            dict(self.meta))


def measured_residual(u: ScalarField, f: ScalarField) -> float:
    """Max interior defect of the pair on the lab's own stencils."""
    if isinstance(u.domain, SpaceTimeDomain):
        res = dt(u).values - laplacian(u).values - f.values
    else:
        res = laplacian(u).values - f.values
    return float(np.max(np.abs(res[interior_mask(u.domain)])))


# ---------------------------------------------------------------------------
# analytic recipes

_RECIPE_NAMES = ("x1", "x2", "x3", "t")


def parse_recipe(recipe: str):
    """Parse ``"u=sin(pi*x1)*sin(pi*x2)"`` (the ``u=`` prefix is optional) into sympy."""
    import sympy as sp

    text = recipe.strip()
    if "=" in text:
        lhs, text = text.split("=", 1)
        if lhs.strip() != "u":
            raise ValueError(f"recipe must define u, got {lhs.strip()!r}")
    symbols = {name: sp.Symbol(name, real=True) for name in _RECIPE_NAMES}
    local = dict(symbols)
    local.update(pi=sp.pi, E=sp.E)
    try:
        expr = sp.parse_expr(text, local_dict=local)
    except (SyntaxError, TypeError, sp.SympifyError) as err:
        raise ValueError(f"cannot parse recipe {recipe!r}: {err}") from err
    extra = {s.name for s in expr.free_symbols} - set(_RECIPE_NAMES)
    if extra:
        raise ValueError(f"unknown symbols in recipe: {sorted(extra)}")
    return expr, symbols


def _lambdify(expr, symbols, n: int, parabolic: bool) -> Callable:
    import sympy as sp

    args = ([symbols["t"]] if parabolic else []) + [symbols[f"x{i + 1}"] for i in range(n)]
    fn = sp.lambdify(args, expr, modules="numpy")
    return fn


def analytic_forcing(recipe: str, n: int, parabolic: bool):
    """Return ``(u_expr, f_expr, symbols)`` with ``f = Δu`` or ``f = ∂t u - Δu``."""
    import sympy as sp

    expr, symbols = parse_recipe(recipe)
    names = {s.name for s in expr.free_symbols}
    if any(f"x{i + 1}" in names for i in range(n, 3)):
        raise ValueError(f"recipe uses coordinates beyond dimension {n}")
    if "t" in names and not parabolic:
        raise ValueError("time-dependent recipe needs a space-time grid")
    lap = sum(sp.diff(expr, symbols[f"x{i + 1}"], 2) for i in range(n))
    f_expr = sp.diff(expr, symbols["t"]) - lap if parabolic else lap
    return expr, f_expr, symbols


def _sample(fn: Callable, domain: AnyDomain, singular_at=None) -> np.ndarray:
    coords = domain.coords()
    with np.errstate(all="ignore"):
        vals = np.broadcast_to(np.asarray(fn(*coords), dtype=np.float64), domain.shape).copy()
    if singular_at is not None:
        _cap(vals, fn, domain, singular_at)
    return vals


def _cap(vals: np.ndarray, fn: Callable, domain: AnyDomain, point) -> None:
    """Replace values at nodes closer than h to ``point`` by the value at distance h."""
    space = domain.space
    h = space.h
    mesh = [np.broadcast_to(c, space.shape) for c in space.coords()]
    d = np.sqrt(sum((c - p) ** 2 for c, p in zip(mesh, point)))
    near = np.argwhere(d < h)
    for idx in near:
        x = np.array([mesh[i][tuple(idx)] for i in range(space.n)])
        off = x - np.asarray(point, dtype=float)
        r = np.linalg.norm(off)
        e = off / r if r > 0 else np.eye(space.n)[0]
        y = np.asarray(point, dtype=float) + h * e
        if isinstance(domain, SpaceTimeDomain):
            t = domain.times()
            with np.errstate(all="ignore"):
                v = np.broadcast_to(fn(t, *y), t.shape)
            vals[(slice(None),) + tuple(idx)] = v
        else:
            with np.errstate(all="ignore"):
                vals[tuple(idx)] = float(fn(*y))


@functools.lru_cache(maxsize=64)
def _recipe_functions(recipe: str, n: int, parabolic: bool):
    u_expr, f_expr, symbols = analytic_forcing(recipe, n, parabolic)
    return _lambdify(u_expr, symbols, n, parabolic), _lambdify(f_expr, symbols, n, parabolic)


def manufactured_pair(recipe: str, domain: AnyDomain, singular_at=None) -> SolutionPair:
    """Sample ``u`` and its analytic forcing on ``domain``.

    ``singular_at`` names a point where ``u`` or ``f`` blows up; nodes within
    distance ``h`` of it take the value at distance ``h`` (node capping).
    """
    parabolic = isinstance(domain, SpaceTimeDomain)
    u_fn, f_fn = _recipe_functions(recipe, domain.ndim_space, parabolic)
    u_vals = _sample(u_fn, domain, singular_at)
    f_vals = _sample(f_fn, domain, singular_at)
    if not (np.all(np.isfinite(u_vals)) and np.all(np.isfinite(f_vals))):
        raise ValueError(f"recipe {recipe!r} is unbounded on the grid; pass singular_at to cap it")
    u = ScalarField(domain, u_vals)
    f = ScalarField(domain, f_vals)
    meta = {"recipe": recipe}
    if singular_at is not None:
        meta["capped_at"] = tuple(float(v) for v in singular_at)
    return SolutionPair(u, f, "manufactured", measured_residual(u, f), meta)


# ---------------------------------------------------------------------------
# conjugate gradients


def _dot(a: np.ndarray, b: np.ndarray) -> float:
    # numpy pairwise summation: deterministic, independent of BLAS threading
    return float(np.sum(a * b))


def conjugate_gradient(apply: Callable[[np.ndarray], np.ndarray], b: np.ndarray, rtol: float = 1e-12,
                       atol: float = 0.0, maxiter: int | None = None):
    """Solve ``A x = b`` for SPD ``A`` given as a callable; returns ``(x, iterations)``."""
    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rr = _dot(r, r)
    tol = max(rtol * np.sqrt(rr), atol)
    if maxiter is None:
        maxiter = 50 * int(round(b.size ** (1.0 / max(b.ndim, 1)))) + 1000
    if np.sqrt(rr) <= tol:
        return x, 0
    for it in range(1, maxiter + 1):
        ap = apply(p)
        alpha = rr / _dot(p, ap)
        x += alpha * p
        r -= alpha * ap
        rr_new = _dot(r, r)
        if np.sqrt(rr_new) <= tol:
            return x, it
        p *= rr_new / rr
        p += r
        rr = rr_new
    raise ConvergenceError(f"CG did not reach {tol:.3e} in {maxiter} iterations "
                           f"(residual {np.sqrt(rr):.3e})")


def _lap_interior(u: np.ndarray, h: float) -> np.ndarray:
    """(2n+1)-point Laplacian at the interior nodes of a full-grid array."""
    n = u.ndim
    core = (slice(1, -1),) * n
    out = -2.0 * n * u[core]
    for ax in range(n):
        lo = tuple(slice(0, -2) if i == ax else slice(1, -1) for i in range(n))
        hi = tuple(slice(2, None) if i == ax else slice(1, -1) for i in range(n))
        out = out + u[lo] + u[hi]
    return out / (h * h)


def _neg_lap_dirichlet(e: np.ndarray, h: float) -> np.ndarray:
    """``-Δ_h`` on interior unknowns with zero boundary values."""
    return -_lap_interior(np.pad(e, 1), h)


def solve_poisson(f: ScalarField, boundary: ScalarField | None = None, rtol: float = 1e-12) -> SolutionPair:
    """Solve the (2n+1)-point Poisson problem on the whole box with Dirichlet data.

    The boundary values of ``boundary`` are imposed (zero if omitted); its
    interior values are ignored.
    """
    domain = f.domain
    if not isinstance(domain, Domain):
        raise ValueError("solve_poisson needs a spatial field")
    h, n = domain.h, domain.n
    core = (slice(1, -1),) * n
    ub = np.zeros(domain.shape) if boundary is None else boundary.values.copy()
    ub[core] = 0.0
    b = _lap_interior(ub, h) - f.values[core]
    e, iters = conjugate_gradient(lambda x: _neg_lap_dirichlet(x, h), b, rtol=rtol)
    u = ub
    u[core] = e
    uf = ScalarField(domain, u)
    res = float(np.max(np.abs(_lap_interior(u, h) - f.values[core])))
    return SolutionPair(uf, f, "solved", res, {"solver": "poisson-cg", "iterations": iters})


def solve_heat(f: ScalarField, u0: ScalarField, boundary: ScalarField | None = None,
               theta: float = 0.5, rtol: float = 1e-13) -> SolutionPair:
    """Theta-scheme time marching for ``∂t u - Δu = f`` with Dirichlet data.

    ``theta = 1/2`` is Crank-Nicolson, ``theta = 1`` backward Euler.  Each step
    solves ``(I - theta*tau*Δ_h) u^{k+1} = ...`` by conjugate gradients.
    """
    domain = f.domain
    if not isinstance(domain, SpaceTimeDomain):
        raise ValueError("solve_heat needs a forcing on a space-time grid")
    if not 0.5 <= theta <= 1.0:
        raise ValueError("theta must lie in [1/2, 1]")
    if u0.domain != domain.space:
        raise ValueError("initial data must live on the spatial grid of the forcing")
    h, n, tau = domain.h, domain.n, domain.tau
    core = (slice(1, -1),) * n
    fv = f.values
    bv = np.zeros(domain.shape) if boundary is None else boundary.values
    u = np.empty(domain.shape)
    u[0] = u0.values
    total_iters = 0

    def apply(x):
        return x + theta * tau * _neg_lap_dirichlet(x, h)

    res = 0.0
    for k in range(domain.nt - 1):
        nxt = bv[k + 1].copy()
        nxt[core] = 0.0
        rhs = (u[k][core] + (1 - theta) * tau * _lap_interior(u[k], h)
               + tau * (theta * fv[k + 1][core] + (1 - theta) * fv[k][core])
               + theta * tau * _lap_interior(nxt, h))
        e, iters = conjugate_gradient(apply, rhs, rtol=rtol)
        total_iters += iters
        nxt[core] = e
        u[k + 1] = nxt
        step = ((u[k + 1][core] - u[k][core]) / tau - theta * _lap_interior(u[k + 1], h)
                - (1 - theta) * _lap_interior(u[k], h)
                - theta * fv[k + 1][core] - (1 - theta) * fv[k][core])
        res = max(res, float(np.max(np.abs(step))))
    meta = {"solver": "theta-cg", "theta": theta, "iterations": total_iters}
    return SolutionPair(ScalarField(domain, u), f, "solved", res, meta)


# ---------------------------------------------------------------------------
# seeded corpus

FAMILIES = ("trig-polynomial", "radial-power", "bump")


@dataclass(frozen=True)
class CorpusSpec:
    seed: int = 0
    count: int = 20
    family: str = "trig-polynomial"
    decay: float = 3.0
    amplitude: tuple[float, float] = (0.5, 1.5)
    modes: int = 3
    base_frequency: float = np.pi / 2

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown corpus family {self.family!r}")
        if self.count < 0:
            raise ValueError("count must be non-negative")
        lo, hi = self.amplitude
        if not 0 < lo <= hi:
            raise ValueError("amplitude range must satisfy 0 < lo <= hi")


def _wavevectors(n: int, K: int) -> np.ndarray:
    ks = [k for k in itertools.product(range(-K, K + 1), repeat=n)
          if any(k) and next(c for c in k if c != 0) > 0]
    return np.array(ks, dtype=float)


def _trig_item(rng, cspec: CorpusSpec, n: int, parabolic: bool):
    ks = _wavevectors(n, cspec.modes)
    norms = np.linalg.norm(ks, axis=1)
    amp = rng.uniform(*cspec.amplitude, size=len(ks)) * rng.choice([-1.0, 1.0], size=len(ks))
    amp = amp / norms**cspec.decay
    phase = rng.uniform(0.0, 2 * np.pi, size=len(ks))
    omega = cspec.base_frequency * ks
    nu = rng.uniform(-2.0, 2.0, size=len(ks)) if parabolic else np.zeros(len(ks))
    params = {"amp": amp, "phase": phase, "omega": omega, "nu": nu}

    def evaluate(domain):
        coords = domain.coords()
        t = coords[0] if parabolic else 0.0
        xs = coords[1:] if parabolic else coords
        u = np.zeros(domain.shape)
        f = np.zeros(domain.shape)
        for a, ph, om, v in zip(amp, phase, omega, nu):
            arg = sum(o * x for o, x in zip(om, xs)) + v * t + ph
            s, c = np.sin(arg), np.cos(arg)
            w2 = float(np.dot(om, om))
            u = u + a * s
            f = f + (a * (v * c + w2 * s) if parabolic else -a * w2 * s)
        return u, f

    return evaluate, params


def _radial_item(rng, cspec: CorpusSpec, n: int, parabolic: bool):
    a = rng.uniform(2.5, 4.5)
    scale = rng.uniform(*cspec.amplitude)
    centre = _random_in_ball(rng, n, 0.5)
    beta = rng.uniform(-1.0, 1.0) if parabolic else 0.0

    def evaluate(domain):
        coords = domain.coords()
        xs = coords[1:] if parabolic else coords
        r = np.sqrt(sum((x - c) ** 2 for x, c in zip(xs, centre)))
        phi = scale * r**a
        lap = scale * a * (a + n - 2) * r ** (a - 2)
        if parabolic:
            t = coords[0]
            return (1 + beta * t) * phi, beta * phi - (1 + beta * t) * lap
        return np.broadcast_to(phi, domain.shape), np.broadcast_to(lap, domain.shape)

    return evaluate, {"power": a, "scale": scale, "centre": centre, "beta": beta}


def _bump_item(rng, cspec: CorpusSpec, n: int, parabolic: bool, k: int = 4):
    rho = rng.uniform(0.6, 1.2)
    scale = rng.uniform(*cspec.amplitude)
    centre = _random_in_ball(rng, n, 0.3)
    beta = rng.uniform(-1.0, 1.0) if parabolic else 0.0

    def evaluate(domain):
        coords = domain.coords()
        xs = coords[1:] if parabolic else coords
        y2 = sum((x - c) ** 2 for x, c in zip(xs, centre))
        s = y2 / rho**2
        q = np.clip(1.0 - s, 0.0, None)
        phi = scale * q**k
        lap = scale * (k * (k - 1) * q ** (k - 2) * 4 * y2 / rho**4 - k * q ** (k - 1) * 2 * n / rho**2)
        if parabolic:
            t = coords[0]
            return (1 + beta * t) * phi, beta * phi - (1 + beta * t) * lap
        return np.broadcast_to(phi, domain.shape), np.broadcast_to(lap, domain.shape)

    return evaluate, {"radius": rho, "scale": scale, "centre": centre, "beta": beta}


def _random_in_ball(rng, n: int, radius: float) -> np.ndarray:
    v = rng.normal(size=n)
    v /= np.linalg.norm(v)
    return v * radius * rng.uniform() ** (1.0 / n)


_BUILDERS = {"trig-polynomial": _trig_item, "radial-power": _radial_item, "bump": _bump_item}


def corpus(cspec: CorpusSpec, domain: AnyDomain) -> list[SolutionPair]:
    """Seeded manufactured pairs; parameters do not depend on the grid resolution."""
    parabolic = isinstance(domain, SpaceTimeDomain)
    rng = np.random.default_rng(cspec.seed)
    out = []
    for i in range(cspec.count):
        evaluate, _params = _BUILDERS[cspec.family](rng, cspec, domain.ndim_space, parabolic)
        u_vals, f_vals = evaluate(domain)
        u = ScalarField(domain, u_vals)
        f = ScalarField(domain, f_vals)
        meta = {"family": cspec.family, "seed": cspec.seed, "index": i, "decay": cspec.decay}
        out.append(SolutionPair(u, f, "manufactured", measured_residual(u, f), meta))
    return out


# ---------------------------------------------------------------------------
# serialization


def write_pair(directory, stem: str, pair: SolutionPair) -> list[Path]:
    """Write ``<stem>_u.czf``, ``<stem>_f.czf`` and a ``<stem>.txt`` key-value sidecar."""
    from .fieldio import write_field

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = [directory / f"{stem}_u.czf", directory / f"{stem}_f.czf", directory / f"{stem}.txt"]
    write_field(paths[0], pair.u)
    write_field(paths[1], pair.f)
    lines = [f"provenance={pair.provenance}", f"residual={pair.residual!r}"]
    lines += [f"{k}={v}" for k, v in sorted(pair.meta.items())]
    paths[2].write_text("\n".join(lines) + "\n")
    return paths


def read_pair(directory, stem: str) -> SolutionPair:
    from .fieldio import read_field

    directory = Path(directory)
    u = read_field(directory / f"{stem}_u.czf")
    f = read_field(directory / f"{stem}_f.czf")
    kv = {}
    for line in (directory / f"{stem}.txt").read_text().splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            kv[k] = v
    provenance = kv.pop("provenance")
    residual = float(kv.pop("residual"))
    return SolutionPair(u, f, provenance, residual, kv)
