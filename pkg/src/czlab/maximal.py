"""Sharp (mean-square oscillation) and Hardy-Littlewood maximal operators.

Every operator here is a supremum, over a finite ladder of radii, of a ball
(or parabolic cube) average.  Three backends evaluate the averages:

``mask``
    The fast path.  Per radius, the sums of ``w`` and ``w**2`` over the ball
    are accumulated offset by offset for all requested centres at once, so the
    oscillation follows from the local variance identity
    ``avg(|w - avg w|^2) = avg(w^2) - avg(w)^2``.
``brute``
    The oracle.  Loops over centres and radii, gathers the member nodes of each
    region from the grid and sums them.  Both paths add the same numbers in
    the same order (row-major within a ball, ascending time slices outside),
    so they agree bitwise.
``fft-like`` (alias ``fft``)
    Frequency-domain convolution with the ball indicator; agrees with
    ``mask`` to rounding only.

A region is admissible at a centre when all of its lattice nodes exist in the
grid.  Values are squared (no square root is taken).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .fields import (
    AnyDomain,
    Region,
    ScalarField,
    SpaceTimeDomain,
    SymTensorField,
    ball_offsets,
    region_mask,
    time_offsets,
)

BACKENDS = ("mask", "fft-like", "brute")
MIN_BALL_NODES = 5


@dataclass(frozen=True)
class RadiusSet:
    """Increasing radii over which maximal suprema are taken."""

    radii: tuple[float, ...]
    policy: str = "explicit"

    def __post_init__(self):
        rs = tuple(float(r) for r in self.radii)
        if not rs:
            raise ValueError("radius set is empty")
        if any(r <= 0 for r in rs):
            raise ValueError("radii must be positive")
        if any(b <= a for a, b in zip(rs, rs[1:])):
            raise ValueError("radii must be strictly increasing")
        object.__setattr__(self, "radii", rs)

    @classmethod
    def geometric(cls, domain: AnyDomain, kappa: float = 1.25, r_min: float | None = None,
                  r_max: float | None = None) -> "RadiusSet":
        """``r_j = r_min * kappa**j`` with ``r_min = 2h``, up to the largest region that fits."""
        h = domain.h
        r = 2 * h if r_min is None else r_min
        top = _largest_radius(domain) if r_max is None else r_max
        out = []
        while r <= top * (1 + 1e-12):
            if _node_count(domain, r) >= MIN_BALL_NODES:
                out.append(r)
            r *= kappa
        return cls(tuple(out), "geometric")

    @classmethod
    def dense(cls, domain: AnyDomain, r_max: float | None = None) -> "RadiusSet":
        """Every multiple ``j*h`` with ``j >= 2``."""
        h = domain.h
        top = _largest_radius(domain) if r_max is None else r_max
        jmax = int(np.floor(top / h * (1 + 1e-12)))
        out = [j * h for j in range(2, jmax + 1) if _node_count(domain, j * h) >= MIN_BALL_NODES]
        return cls(tuple(out), "dense")

    @classmethod
    def from_policy(cls, domain: AnyDomain, policy: str, r_max: float | None = None):
        if policy == "geometric":
            return cls.geometric(domain, r_max=r_max)
        if policy == "dense":
            return cls.dense(domain, r_max=r_max)
        raise ValueError(f"unknown radius ladder {policy!r}")

    def check(self, domain: AnyDomain) -> None:
        h = domain.h
        if self.radii[0] < 2 * h * (1 - 1e-12):
            raise ValueError(f"smallest radius {self.radii[0]:.4g} is below 2h = {2 * h:.4g}")
        for r in self.radii:
            if _node_count(domain, r) < MIN_BALL_NODES:
                raise ValueError(f"radius {r:.4g} holds fewer than {MIN_BALL_NODES} nodes")

    def truncated(self, r_max: float) -> "RadiusSet":
        return RadiusSet(tuple(r for r in self.radii if r <= r_max * (1 + 1e-12)), self.policy)


def _largest_radius(domain: AnyDomain) -> float:
    space = domain.space
    r = 0.5 * (space.hi[0] - space.lo[0])
    if isinstance(domain, SpaceTimeDomain):
        r = min(r, np.sqrt(domain.t_hi - domain.t_lo))
    return r


def _node_count(domain: AnyDomain, r: float) -> int:
    k = len(ball_offsets(domain.ndim_space, domain.h, r))
    if isinstance(domain, SpaceTimeDomain):
        k *= len(time_offsets(domain.tau, r))
    return k


@dataclass(frozen=True, eq=False)
class MaximalField:
    """Maximal values at a set of nodes.

    ``points`` holds node multi-indices (time index first on space-time grids).
    Invalid points (no admissible radius) carry NaN in ``values`` and
    ``radius_argmax``.
    """

    domain: AnyDomain
    points: np.ndarray
    values: np.ndarray
    radius_argmax: np.ndarray
    valid_mask: np.ndarray

    def to_grid(self) -> tuple[np.ndarray, np.ndarray]:
        vals = np.full(self.domain.shape, np.nan)
        arg = np.full(self.domain.shape, np.nan)
        idx = tuple(self.points.T)
        vals[idx] = self.values
        arg[idx] = self.radius_argmax
        return vals, arg

    def valid_values(self) -> np.ndarray:
        return self.values[self.valid_mask]


# ---------------------------------------------------------------------------
# points


def all_nodes(domain: AnyDomain) -> np.ndarray:
    return np.argwhere(np.ones(domain.shape, dtype=bool))


def nodes_in(domain: AnyDomain, reg: Region) -> np.ndarray:
    return np.argwhere(region_mask(domain, reg))


def _as_points(domain: AnyDomain, points) -> np.ndarray:
    if points is None:
        return all_nodes(domain)
    pts = np.atleast_2d(np.asarray(points, dtype=np.int64))
    d = len(domain.shape)
    if pts.shape[1] != d:
        raise ValueError(f"points need {d} indices each, got {pts.shape[1]}")
    if np.any(pts < 0) or np.any(pts >= np.array(domain.shape)):
        raise ValueError("point index outside the grid")
    return pts


# ---------------------------------------------------------------------------
# component handling


def _components(w) -> list[tuple[np.ndarray, float]]:
    """Flatten a field, or a sequence of fields, into (array, weight) pairs."""
    if isinstance(w, (ScalarField, SymTensorField)):
        return w.components()
    out = []
    for item in w:
        out.extend(item.components())
    return out


def _domain_of(w) -> AnyDomain:
    if isinstance(w, (ScalarField, SymTensorField)):
        return w.domain
    doms = [item.domain for item in w]
    if not doms:
        raise ValueError("empty field list")
    if any(d != doms[0] for d in doms):
        raise ValueError("fields must share a domain")
    return doms[0]


def _combine(s1: np.ndarray, s2: np.ndarray, count: int, weights, centred: bool) -> np.ndarray:
    """Weighted sum over components of the per-component oscillation (or mean square)."""
    total = np.zeros(s1.shape[1:])
    for c, wt in enumerate(weights):
        m1 = s1[c] / count
        m2 = s2[c] / count
        val = np.maximum(m2 - m1 * m1, 0.0) if centred else m2
        total = total + wt * val
    return total


# ---------------------------------------------------------------------------
# per-radius geometry


@dataclass(frozen=True)
class _Stencil:
    r: float
    offsets: np.ndarray  # (K, n) spatial offsets, row-major
    flat: np.ndarray  # spatial offsets as flat index shifts
    extent: int
    toffs: np.ndarray | None  # time offsets (parabolic)

    @property
    def count(self) -> int:
        k = len(self.offsets)
        return k * (len(self.toffs) if self.toffs is not None else 1)


def _stencil(domain: AnyDomain, r: float) -> _Stencil:
    space = domain.space
    offs = ball_offsets(space.n, space.h, r)
    strides = np.array([space.m ** (space.n - 1 - i) for i in range(space.n)])
    flat = offs @ strides
    toffs = time_offsets(domain.tau, r) if isinstance(domain, SpaceTimeDomain) else None
    return _Stencil(r, offs, flat, int(np.max(np.abs(offs))), toffs)


def _admissible(domain: AnyDomain, pts: np.ndarray, st: _Stencil) -> np.ndarray:
    space = domain.space
    sp = pts[:, 1:] if st.toffs is not None else pts
    ok = np.all((sp - st.extent >= 0) & (sp + st.extent <= space.m - 1), axis=1)
    if st.toffs is not None:
        t = pts[:, 0]
        ok &= (t + st.toffs[0] >= 0) & (t + st.toffs[-1] <= domain.nt - 1)
    return ok


# ---------------------------------------------------------------------------
# backends: each returns per-component sums of w and w^2, shape (C, P)


def _sums_mask(domain, comps, pts, st):
    space = domain.space
    C = len(comps)
    if st.toffs is None:
        flat_pts = np.ravel_multi_index(tuple(pts.T), domain.shape)
        a1 = np.stack([c.ravel() for c, _ in comps])
        a2 = np.square(a1)
        s1 = np.zeros((C, len(pts)))
        s2 = np.zeros((C, len(pts)))
        for o in st.flat:
            s1 += a1[:, flat_pts + o]
            s2 += a2[:, flat_pts + o]
        return s1, s2
    sp_flat = np.ravel_multi_index(tuple(pts[:, 1:].T), space.shape)
    a1 = np.stack([c.reshape(domain.nt, -1) for c, _ in comps])
    a2 = np.square(a1)
    tt = pts[:, 0][:, None] + st.toffs[None, :]
    b1 = np.zeros((C,) + tt.shape)
    b2 = np.zeros((C,) + tt.shape)
    for o in st.flat:
        col = (sp_flat + o)[:, None]
        b1 += a1[:, tt, col]
        b2 += a2[:, tt, col]
    s1 = np.zeros((C, len(pts)))
    s2 = np.zeros((C, len(pts)))
    for j in range(tt.shape[1]):
        s1 += b1[:, :, j]
        s2 += b2[:, :, j]
    return s1, s2


def _sums_fft(domain, comps, pts, st):
    from scipy.signal import fftconvolve

    space = domain.space
    K = st.extent
    kern = np.zeros((2 * K + 1,) * space.n)
    kern[tuple((st.offsets + K).T)] = 1.0
    if st.toffs is not None:
        J = int(np.max(np.abs(st.toffs)))
        tk = np.zeros(2 * J + 1)
        tk[st.toffs + J] = 1.0
        kern = tk.reshape((-1,) + (1,) * space.n) * kern[None]
    # correlation = convolution with the flipped kernel
    flipped = kern[(slice(None, None, -1),) * kern.ndim]
    idx = tuple(pts.T)
    s1, s2 = [], []
    for c, _ in comps:
        s1.append(fftconvolve(c, flipped, mode="same")[idx])
        s2.append(fftconvolve(np.square(c), flipped, mode="same")[idx])
    return np.array(s1), np.array(s2)


def _sums_brute(domain, comps, pts, st):
    """Per-centre gathering; shares no geometry with the stencil beyond r, h and tau."""
    space = domain.space
    n, h, r = space.n, space.h, st.r
    K0 = int(np.ceil(r / h))
    rng = np.arange(-K0, K0 + 1)
    grids = np.meshgrid(*([rng] * n), indexing="ij")
    d2 = np.zeros(grids[0].shape)
    for g in grids:
        d2 = d2 + (g * h) ** 2
    member = d2 < r * r
    # trim the block to the members' bounding box
    K = int(np.max(np.abs(np.argwhere(member) - K0)))
    member = member[(slice(K0 - K, K0 + K + 1),) * n]
    parabolic = isinstance(domain, SpaceTimeDomain)
    if parabolic:
        tau = domain.tau
        half = 0.5 * r * r
        J0 = int(np.ceil(half / tau)) + 1
        js = [j for j in range(-J0, J0 + 1) if j * tau > -half and j * tau <= half]
    C = len(comps)
    s1 = np.zeros((C, len(pts)))
    s2 = np.zeros((C, len(pts)))
    for p, idx in enumerate(pts):
        centre = idx[1:] if parabolic else idx
        block = tuple(slice(int(c) - K, int(c) + K + 1) for c in centre)
        for c, (arr, _) in enumerate(comps):
            if parabolic:
                # one row per time slice: sum each row, then the rows in order
                vals = arr[(slice(int(idx[0]) + js[0], int(idx[0]) + js[-1] + 1),) + block][:, member]
                acc1 = np.cumsum(np.cumsum(vals, axis=1)[:, -1])[-1]
                acc2 = np.cumsum(np.cumsum(np.square(vals), axis=1)[:, -1])[-1]
            else:
                vals = arr[block][member]
                acc1 = np.cumsum(vals)[-1]
                acc2 = np.cumsum(np.square(vals))[-1]
            s1[c, p] = acc1
            s2[c, p] = acc2
    return s1, s2


def _brute_admissible(domain, pts, r):
    space = domain.space
    n, h = space.n, space.h
    K0 = int(np.ceil(r / h))
    rng = np.arange(-K0, K0 + 1)
    ok = np.zeros(len(pts), dtype=bool)
    parabolic = isinstance(domain, SpaceTimeDomain)
    if parabolic:
        tau = domain.tau
        half = 0.5 * r * r
        J0 = int(np.ceil(half / tau)) + 1
        js = [j for j in range(-J0, J0 + 1) if j * tau > -half and j * tau <= half]
    grids = np.meshgrid(*([rng] * n), indexing="ij")
    d2 = np.zeros(grids[0].shape)
    for g in grids:
        d2 = d2 + (g * h) ** 2
    member = np.argwhere(d2 < r * r) - K0
    for p, idx in enumerate(pts):
        centre = idx[1:] if parabolic else idx
        nodes = member + centre
        good = bool(np.all((nodes >= 0) & (nodes <= space.m - 1)))
        if parabolic:
            good = good and idx[0] + js[0] >= 0 and idx[0] + js[-1] <= domain.nt - 1
        ok[p] = good
    return ok


_SUMS = {"mask": _sums_mask, "fft-like": _sums_fft, "fft": _sums_fft, "brute": _sums_brute}


# ---------------------------------------------------------------------------
# public operators


def oscillation_table(w, points=None, radii: RadiusSet | None = None, backend: str = "mask",
                      centred: bool = True) -> np.ndarray:
    """Averages for every (point, radius); NaN where the region does not fit.

    ``centred=True`` gives the mean-square oscillation, ``False`` the mean of
    the squared magnitude.  ``w`` may be a field or a sequence of fields on a
    common grid, in which case the per-field values are added.
    """
    if backend not in _SUMS:
        raise ValueError(f"unknown maximal backend {backend!r}")
    domain = _domain_of(w)
    comps = _components(w)
    pts = _as_points(domain, points)
    if radii is None:
        radii = RadiusSet.geometric(domain)
    radii.check(domain)
    weights = [wt for _, wt in comps]
    table = np.full((len(pts), len(radii.radii)), np.nan)
    for j, r in enumerate(radii.radii):
        st = _stencil(domain, r)
        if backend == "brute":
            ok = _brute_admissible(domain, pts, r)
        else:
            ok = _admissible(domain, pts, st)
        if not np.any(ok):
            continue
        s1, s2 = _SUMS[backend](domain, comps, pts[ok], st)
        count = st.count
        if backend == "brute":
            count = _brute_count(domain, r)
        table[ok, j] = _combine(s1, s2, count, weights, centred)
    return table


def _brute_count(domain, r) -> int:
    space = domain.space
    h = space.h
    K0 = int(np.ceil(r / h))
    count = 0
    for k in np.ndindex(*((2 * K0 + 1,) * space.n)):
        d2 = 0.0
        for ki in k:
            d2 = d2 + ((ki - K0) * h) ** 2
        count += d2 < r * r
    if isinstance(domain, SpaceTimeDomain):
        tau, half = domain.tau, 0.5 * r * r
        J0 = int(np.ceil(half / tau)) + 1
        count *= sum(1 for j in range(-J0, J0 + 1) if j * tau > -half and j * tau <= half)
    return count


def _supremum(domain, pts, table, radii: RadiusSet) -> MaximalField:
    P = len(pts)
    best = np.full(P, -np.inf)
    arg = np.full(P, np.nan)
    for j, r in enumerate(radii.radii):
        col = table[:, j]
        better = ~np.isnan(col) & (col > best)  # strict: ties keep the smaller radius
        best[better] = col[better]
        arg[better] = r
    valid = ~np.isnan(arg)
    best[~valid] = np.nan
    return MaximalField(domain, pts, best, arg, valid)


def _maximal(w, points, radii, backend, centred, parabolic):
    domain = _domain_of(w)
    if parabolic != isinstance(domain, SpaceTimeDomain):
        want = "a space-time" if parabolic else "a spatial"
        raise ValueError(f"this operator needs {want} field")
    pts = _as_points(domain, points)
    if radii is None:
        radii = RadiusSet.geometric(domain)
    table = oscillation_table(w, pts, radii, backend, centred)
    return _supremum(domain, pts, table, radii)


def sharp_maximal_2(w, points=None, radii: RadiusSet | None = None, backend: str = "mask") -> MaximalField:
    """``sup_r avg_{B_r(x)} |w - avg_{B_r(x)} w|^2`` over admissible radii."""
    return _maximal(w, points, radii, backend, True, False)


def sharp_maximal_2_parabolic(w, points=None, radii: RadiusSet | None = None,
                              backend: str = "mask") -> MaximalField:
    """Parabolic-cube version of :func:`sharp_maximal_2`."""
    return _maximal(w, points, radii, backend, True, True)


def hl_maximal(w, points=None, radii: RadiusSet | None = None, backend: str = "mask") -> MaximalField:
    """``sup_r avg_{B_r(x)} |w|^2`` (squared-mean convention); cubes on space-time grids."""
    domain = _domain_of(w)
    return _maximal(w, points, radii, backend, False, isinstance(domain, SpaceTimeDomain))


def local_oscillation2(w, reg: Region) -> float:
    """``avg_reg |w - avg_reg w|^2`` by two passes, cross-checked against the variance identity."""
    domain = _domain_of(w)
    mask = region_mask(domain, reg)
    count = int(np.count_nonzero(mask))
    if count == 0:
        raise ValueError("region contains no grid node")
    direct = 0.0
    identity = 0.0
    scale = 0.0
    for arr, wt in _components(w):
        vals = arr[mask]
        mean = np.sum(vals) / count
        direct += wt * np.sum(np.square(vals - mean)) / count
        ms = np.sum(np.square(vals)) / count
        identity += wt * (ms - mean * mean)
        scale += wt * ms
    if abs(direct - identity) > 1e-10 * scale:
        raise FloatingPointError(
            f"two-pass oscillation {direct!r} and variance identity {identity!r} disagree")
    return float(direct)


def oscillation_at(w, point: Sequence[int], radii: RadiusSet, backend: str = "mask") -> np.ndarray:
    """Oscillation profile over ``radii`` at a single node (NaN where inadmissible)."""
    return oscillation_table(w, [point], radii, backend)[0]
