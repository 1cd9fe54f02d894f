"""Uniform grids, grid-sampled fields and finite-difference operators.

Every field lives on a uniform Cartesian grid covering an axis-aligned box in
one to three space dimensions, optionally with a leading time axis.  Arrays are
stored in row-major order; for space-time fields the time index comes first so
that ``values[k]`` is the k-th time slice.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

MIN_NODES = 8


@dataclass(frozen=True)
class Domain:
    """Uniform grid on the box ``[lo, hi]`` with ``m`` nodes per axis."""

    n: int
    lo: tuple[float, ...]
    hi: tuple[float, ...]
    m: int

    def __post_init__(self):
        if self.n not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.n}")
        object.__setattr__(self, "lo", tuple(float(v) for v in self.lo))
        object.__setattr__(self, "hi", tuple(float(v) for v in self.hi))
        if len(self.lo) != self.n or len(self.hi) != self.n:
            raise ValueError("lo/hi must have one entry per axis")
        if self.m < MIN_NODES:
            raise ValueError(f"need at least {MIN_NODES} nodes per axis, got {self.m}")
        widths = [b - a for a, b in zip(self.lo, self.hi)]
        if min(widths) <= 0:
            raise ValueError("box must have positive extent on every axis")
        if max(widths) - min(widths) > 1e-12 * max(widths):
            raise ValueError("spacing must be uniform across axes (equal box widths)")

    @classmethod
    def box(cls, n: int = 2, m: int = 64, half_width: float = 2.0) -> "Domain":
        """The centred cube ``[-half_width, half_width]^n``."""
        return cls(n, (-half_width,) * n, (half_width,) * n, m)

    @property
    def h(self) -> float:
        return (self.hi[0] - self.lo[0]) / (self.m - 1)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.m,) * self.n

    @property
    def size(self) -> int:
        return self.m**self.n

    @property
    def cell_volume(self) -> float:
        return self.h**self.n

    @property
    def space(self) -> "Domain":
        return self

    @property
    def ndim_space(self) -> int:
        return self.n

    def axis(self, i: int) -> np.ndarray:
        return self.lo[i] + self.h * np.arange(self.m)

    def axes(self) -> list[np.ndarray]:
        return [self.axis(i) for i in range(self.n)]

    def coords(self) -> list[np.ndarray]:
        """Broadcastable coordinate arrays, one per axis."""
        out = []
        for i, a in enumerate(self.axes()):
            shape = [1] * self.n
            shape[i] = self.m
            out.append(a.reshape(shape))
        return out

    def mesh(self) -> list[np.ndarray]:
        return [np.broadcast_to(c, self.shape) for c in self.coords()]

    def nearest_node(self, x: Sequence[float]) -> tuple[int, ...]:
        idx = []
        for i in range(self.n):
            k = int(round((x[i] - self.lo[i]) / self.h))
            idx.append(min(max(k, 0), self.m - 1))
        return tuple(idx)

    def node(self, idx: Sequence[int]) -> np.ndarray:
        return np.array([self.lo[i] + self.h * idx[i] for i in range(self.n)])

    def refined(self, m: int) -> "Domain":
        return Domain(self.n, self.lo, self.hi, m)


@dataclass(frozen=True)
class SpaceTimeDomain:
    """A spatial grid times ``nt`` equally spaced time levels on ``[t_lo, t_hi]``."""

    space: Domain
    t_lo: float
    t_hi: float
    nt: int

    def __post_init__(self):
        if self.nt < MIN_NODES:
            raise ValueError(f"need at least {MIN_NODES} time slices, got {self.nt}")
        if not self.t_hi > self.t_lo:
            raise ValueError("t_hi must exceed t_lo")

    @classmethod
    def parabolic(cls, space: Domain, t_lo: float, nt: int, tau: float | None = None):
        """Time levels ``t_lo + k*tau``; ``tau`` defaults to ``h**2/2``."""
        if tau is None:
            tau = space.h**2 / 2
        if tau <= 0:
            raise ValueError("time step must be positive")
        return cls(space, t_lo, t_lo + (nt - 1) * tau, nt)

    @property
    def tau(self) -> float:
        return (self.t_hi - self.t_lo) / (self.nt - 1)

    @property
    def n(self) -> int:
        return self.space.n

    @property
    def ndim_space(self) -> int:
        return self.space.n

    @property
    def h(self) -> float:
        return self.space.h

    @property
    def m(self) -> int:
        return self.space.m

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.nt,) + self.space.shape

    @property
    def size(self) -> int:
        return self.nt * self.space.size

    @property
    def cell_volume(self) -> float:
        return self.space.cell_volume * self.tau

    def times(self) -> np.ndarray:
        return self.t_lo + self.tau * np.arange(self.nt)

    def coords(self) -> list[np.ndarray]:
        """Broadcastable ``[t, x1, ..., xn]`` coordinate arrays."""
        t = self.times().reshape((self.nt,) + (1,) * self.n)
        return [t] + [c[None, ...] for c in self.space.coords()]

    def nearest_node(self, x: Sequence[float], t: float) -> tuple[int, ...]:
        k = int(round((t - self.t_lo) / self.tau))
        return (min(max(k, 0), self.nt - 1),) + self.space.nearest_node(x)

    def refined(self, m: int, nt: int) -> "SpaceTimeDomain":
        return SpaceTimeDomain(self.space.refined(m), self.t_lo, self.t_hi, nt)


AnyDomain = Union[Domain, SpaceTimeDomain]


def _frozen(values: np.ndarray) -> np.ndarray:
    out = np.array(values, dtype=np.float64, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class ScalarField:
    """One real value per grid node.

    ``valid`` optionally flags the nodes where the values are meaningful
    (e.g. after mollification); ``None`` means every node is valid.
    """

    domain: AnyDomain
    values: np.ndarray
    valid: np.ndarray | None = None

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.shape != self.domain.shape:
            raise ValueError(f"values shape {vals.shape} != grid shape {self.domain.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", _frozen(vals))
        if self.valid is not None:
            mask = np.asarray(self.valid, dtype=bool)
            if mask.shape != self.domain.shape:
                raise ValueError("valid mask must match the grid shape")
            mask = mask.copy()
            mask.setflags(write=False)
            object.__setattr__(self, "valid", mask)

    @classmethod
    def from_function(cls, domain: AnyDomain, fn) -> "ScalarField":
        """Sample ``fn(*coords)`` (``fn(t, x1, ...)`` on space-time grids)."""
        vals = np.broadcast_to(np.asarray(fn(*domain.coords()), dtype=np.float64), domain.shape)
        return cls(domain, vals)

    @property
    def is_spacetime(self) -> bool:
        return isinstance(self.domain, SpaceTimeDomain)

    def magnitude(self) -> np.ndarray:
        return np.abs(self.values)

    def components(self) -> list[tuple[np.ndarray, float]]:
        return [(self.values, 1.0)]

    def __add__(self, other):
        return ScalarField(self.domain, self.values + _vals(other))

    def __sub__(self, other):
        return ScalarField(self.domain, self.values - _vals(other))

    def __mul__(self, c: float):
        return ScalarField(self.domain, self.values * c)

    __rmul__ = __mul__


def _vals(x):
    return x.values if isinstance(x, (ScalarField, SymTensorField)) else x


def tensor_pairs(n: int) -> list[tuple[int, int]]:
    """Upper-triangular component order ``(0,0), (0,1), ..., (n-1,n-1)``."""
    return [(i, j) for i in range(n) for j in range(i, n)]


@dataclass(frozen=True, eq=False)
class SymTensorField:
    """Symmetric matrix per node, stored as its n(n+1)/2 upper-triangular entries."""

    domain: AnyDomain
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        n = self.domain.ndim_space
        want = (n * (n + 1) // 2,) + self.domain.shape
        if vals.shape != want:
            raise ValueError(f"tensor values shape {vals.shape} != {want}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("tensor entries must be finite")
        object.__setattr__(self, "values", _frozen(vals))

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return tensor_pairs(self.domain.ndim_space)

    @property
    def weights(self) -> np.ndarray:
        """Frobenius weights: off-diagonal entries appear twice in the full matrix."""
        return np.array([1.0 if i == j else 2.0 for i, j in self.pairs])

    def component(self, i: int, j: int) -> np.ndarray:
        if i > j:
            i, j = j, i
        return self.values[self.pairs.index((i, j))]

    def matrix(self) -> np.ndarray:
        """Full ``(n, n) + grid`` array."""
        n = self.domain.ndim_space
        out = np.empty((n, n) + self.domain.shape)
        for c, (i, j) in enumerate(self.pairs):
            out[i, j] = self.values[c]
            out[j, i] = self.values[c]
        return out

    def magnitude(self) -> np.ndarray:
        """Pointwise Frobenius norm."""
        w = self.weights.reshape((-1,) + (1,) * len(self.domain.shape))
        return np.sqrt(np.sum(w * self.values**2, axis=0))

    def trace(self) -> np.ndarray:
        n = self.domain.ndim_space
        return sum(self.component(i, i) for i in range(n))

    def components(self) -> list[tuple[np.ndarray, float]]:
        return list(zip(self.values, self.weights))

    def __add__(self, other):
        return SymTensorField(self.domain, self.values + _vals(other))

    def __sub__(self, other):
        return SymTensorField(self.domain, self.values - _vals(other))

    def __mul__(self, c: float):
        return SymTensorField(self.domain, self.values * c)

    __rmul__ = __mul__


Field = Union[ScalarField, SymTensorField]


@dataclass(frozen=True)
class Region:
    """A ball ``B_r(center)`` or a parabolic cube ``B_r(center) x (t - r^2/2, t + r^2/2]``."""

    kind: str
    center: tuple[float, ...]
    r: float
    t: float | None = None

    def __post_init__(self):
        if self.kind not in ("ball", "cube"):
            raise ValueError(f"unknown region kind {self.kind!r}")
        if not self.r > 0:
            raise ValueError("radius must be positive")
        if self.kind == "cube" and self.t is None:
            raise ValueError("a parabolic cube needs a centre time")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    @classmethod
    def ball(cls, center: Sequence[float], r: float) -> "Region":
        return cls("ball", tuple(center), r)

    @classmethod
    def cube(cls, center: Sequence[float], t: float, r: float) -> "Region":
        return cls("cube", tuple(center), r, float(t))

    def scaled(self, lam: float) -> "Region":
        return Region(self.kind, self.center, self.r * lam, self.t)


def region_mask(domain: AnyDomain, reg: Region) -> np.ndarray:
    """Nodes whose centres lie strictly inside the ball (half-open in time for cubes)."""
    space = domain.space
    if len(reg.center) != space.n:
        raise ValueError("region centre dimension does not match the grid")
    d2 = np.zeros(space.shape)
    for c, x0 in zip(space.coords(), reg.center):
        d2 = d2 + (c - x0) ** 2
    inside = d2 < reg.r * reg.r
    if reg.kind == "ball":
        if isinstance(domain, SpaceTimeDomain):
            raise ValueError("ball regions apply to spatial fields; use a cube for space-time")
        return inside
    if not isinstance(domain, SpaceTimeDomain):
        raise ValueError("parabolic cubes need a space-time field")
    dt = domain.times() - reg.t
    half = 0.5 * reg.r * reg.r
    tin = (dt > -half) & (dt <= half)
    return tin.reshape((-1,) + (1,) * space.n) & inside[None]


def region_measure(domain: AnyDomain, reg: Region) -> float:
    """Discrete measure: node count times the cell volume."""
    count = int(np.count_nonzero(region_mask(domain, reg)))
    if count == 0:
        raise ValueError("region contains no grid node")
    return count * domain.cell_volume


# ---------------------------------------------------------------------------
# finite differences


def _spatial_axes(u: Field) -> list[int]:
    off = 1 if isinstance(u.domain, SpaceTimeDomain) else 0
    return [off + i for i in range(u.domain.ndim_space)]


def _first_diff(a: np.ndarray, h: float, axis: int) -> np.ndarray:
    # central in the interior, second-order one-sided on the boundary ring
    return np.gradient(a, h, axis=axis, edge_order=2)


def _second_diff(a: np.ndarray, h: float, axis: int) -> np.ndarray:
    a = np.moveaxis(a, axis, 0)
    out = np.empty_like(a)
    out[1:-1] = (a[2:] - 2.0 * a[1:-1] + a[:-2]) / (h * h)
    out[0] = (2.0 * a[0] - 5.0 * a[1] + 4.0 * a[2] - a[3]) / (h * h)
    out[-1] = (2.0 * a[-1] - 5.0 * a[-2] + 4.0 * a[-3] - a[-4]) / (h * h)
    return np.moveaxis(out, 0, axis)


def gradient(u: ScalarField) -> list[ScalarField]:
    """Spatial gradient, one field per axis."""
    h = u.domain.h
    return [ScalarField(u.domain, _first_diff(u.values, h, ax)) for ax in _spatial_axes(u)]


def hessian(u: ScalarField) -> SymTensorField:
    """Spatial Hessian.

    Diagonal entries use the three-point second difference, mixed entries the
    centred cross difference; both are exact on quadratics at interior nodes.
    """
    h = u.domain.h
    axes = _spatial_axes(u)
    first = {}
    comps = []
    for i, j in tensor_pairs(u.domain.ndim_space):
        if i == j:
            comps.append(_second_diff(u.values, h, axes[i]))
        else:
            if i not in first:
                first[i] = _first_diff(u.values, h, axes[i])
            comps.append(_first_diff(first[i], h, axes[j]))
    return SymTensorField(u.domain, np.stack(comps))


def laplacian(u: ScalarField) -> ScalarField:
    """Trace of the Hessian; the standard (2n+1)-point stencil in the interior."""
    h = u.domain.h
    total = np.zeros(u.domain.shape)
    for ax in _spatial_axes(u):
        total = total + _second_diff(u.values, h, ax)
    return ScalarField(u.domain, total)


def dt(u: ScalarField) -> ScalarField:
    """Time derivative: centred in the interior slices, one-sided at the ends."""
    if not isinstance(u.domain, SpaceTimeDomain):
        raise ValueError("time derivative needs a space-time field")
    if u.domain.nt < 3:
        raise ValueError("need at least 3 time slices")
    return ScalarField(u.domain, _first_diff(u.values, u.domain.tau, 0))


def interior_mask(domain: AnyDomain, margin: int = 1, time_margin: int | None = None) -> np.ndarray:
    """Nodes at least ``margin`` nodes away from the spatial boundary (and time ends)."""
    space = domain.space
    m = np.zeros(space.shape, dtype=bool)
    m[(slice(margin, space.m - margin),) * space.n] = True
    if isinstance(domain, SpaceTimeDomain):
        tm = margin if time_margin is None else time_margin
        tmask = np.zeros(domain.nt, dtype=bool)
        tmask[tm : domain.nt - tm] = True
        return tmask.reshape((-1,) + (1,) * space.n) & m[None]
    return m


# ---------------------------------------------------------------------------
# region averages and norms


def region_average(w: Field, reg: Region):
    """Mean over the nodes in ``reg``: a float for scalars, an n x n matrix for tensors."""
    mask = region_mask(w.domain, reg)
    count = np.count_nonzero(mask)
    if count == 0:
        raise ValueError("region contains no grid node")
    if isinstance(w, SymTensorField):
        comp = np.array([np.sum(c[mask]) / count for c in w.values])
        n = w.domain.ndim_space
        out = np.empty((n, n))
        for k, (i, j) in enumerate(w.pairs):
            out[i, j] = out[j, i] = comp[k]
        return out
    return float(np.sum(w.values[mask]) / count)


def lp_norm(w: Field, reg: Region | None, p: float) -> float:
    """Riemann-sum L^p norm over the nodes of ``reg`` (the whole grid if ``None``).

    Tensor fields use the pointwise Frobenius magnitude; ``p = inf`` is the max.
    """
    if not (p >= 1):
        raise ValueError(f"p must be >= 1, got {p}")
    mag = w.magnitude()
    if reg is not None:
        mask = region_mask(w.domain, reg)
        if not np.any(mask):
            raise ValueError("region contains no grid node")
        mag = mag[mask]
    if np.isinf(p):
        return float(np.max(mag))
    return float((np.sum(mag**p) * w.domain.cell_volume) ** (1.0 / p))


def lp_integral(w: Field, reg: Region | None, p: float) -> float:
    """``∫_reg |w|^p`` by the same Riemann sum as :func:`lp_norm`."""
    if not (p >= 1) or np.isinf(p):
        raise ValueError("integral form needs finite p >= 1")
    mag = w.magnitude()
    if reg is not None:
        mask = region_mask(w.domain, reg)
        if not np.any(mask):
            raise ValueError("region contains no grid node")
        mag = mag[mask]
    return float(np.sum(mag**p) * w.domain.cell_volume)


# ---------------------------------------------------------------------------
# stencils shared with the maximal operators


def ball_offsets(n: int, h: float, r: float) -> np.ndarray:
    """Integer node offsets ``k`` with ``|k h| < r``, in row-major order.

    The squared distance is accumulated axis by axis as ``(k_i*h)**2`` so any
    other code using the same expression reproduces membership bitwise.
    """
    K = int(np.ceil(r / h))
    ks = np.indices((2 * K + 1,) * n).reshape(n, -1).T - K
    d2 = np.zeros(len(ks))
    for i in range(n):
        d2 = d2 + (ks[:, i] * h) ** 2
    return ks[d2 < r * r]


def time_offsets(tau: float, r: float) -> np.ndarray:
    """Integer slice offsets ``j`` with ``-r^2/2 < j*tau <= r^2/2``, ascending."""
    half = 0.5 * r * r
    J = int(np.ceil(half / tau)) + 1
    js = np.arange(-J, J + 1)
    return js[(js * tau > -half) & (js * tau <= half)]


def _bump(s: np.ndarray) -> np.ndarray:
    out = np.zeros_like(s)
    inside = s < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - s[inside]))
    return out


def mollify(w: ScalarField, eps: float) -> ScalarField:
    """Convolve with the normalised radial bump supported in ``B_eps``.

    The result is flagged valid only where the whole kernel fits in the grid;
    elsewhere the input values are kept.
    """
    if isinstance(w.domain, SpaceTimeDomain):
        raise ValueError("mollification is spatial; pass a spatial field")
    h = w.domain.h
    if eps < 2 * h * (1 - 1e-12):
        raise ValueError(f"mollifier scale {eps} unresolved on a grid with h={h} (need eps >= 2h)")
    n = w.domain.n
    ks = ball_offsets(n, h, eps)
    s = np.zeros(len(ks))
    for i in range(n):
        s = s + (ks[:, i] * h) ** 2
    weights = _bump(s / (eps * eps))
    weights = weights / np.sum(weights)
    K = int(np.max(np.abs(ks)))
    m = w.domain.m
    if m <= 2 * K:
        raise ValueError("mollifier support does not fit in the grid")
    core = (slice(K, m - K),) * n
    acc = np.zeros((m - 2 * K,) * n)
    for k, wt in zip(ks, weights):
        sl = tuple(slice(K + k[i], m - K + k[i]) for i in range(n))
        acc += wt * w.values[sl]
    out = w.values.copy()
    out[core] = acc
    valid = np.zeros(w.domain.shape, dtype=bool)
    valid[core] = True
    return ScalarField(w.domain, out, valid)
