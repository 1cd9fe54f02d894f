"""Binary and CSV serialization of grid fields.

Binary layout (little-endian throughout)::

    magic        4 bytes  b"CZF1"
    n            uint32   spatial dimension
    kind         uint32   0 scalar, 1 symmetric tensor, 2 maximal
    ncomp        uint32   number of stored channels
    m[n]         uint32   nodes per axis
    lo[n], hi[n] float64  box corners
    has_time     uint32   0 or 1
    [t_lo, t_hi] float64  only when has_time == 1
    [nt]         uint32   only when has_time == 1
    payload      float64  ncomp channels, each in row-major node order

Tensor channels follow the upper-triangular order ``(0,0), (0,1), ...``.
Maximal fields store two channels, the value and the attaining radius, with
NaN at nodes that were not evaluated or had no admissible radius.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .fields import Domain, ScalarField, SpaceTimeDomain, SymTensorField

MAGIC = b"CZF1"
KIND_SCALAR, KIND_TENSOR, KIND_MAXIMAL = 0, 1, 2


def _header(domain, kind: int, ncomp: int) -> bytes:
    space = domain.space
    parts = [struct.pack("<4sIII", MAGIC, space.n, kind, ncomp)]
    parts.append(struct.pack(f"<{space.n}I", *([space.m] * space.n)))
    parts.append(struct.pack(f"<{2 * space.n}d", *space.lo, *space.hi))
    if isinstance(domain, SpaceTimeDomain):
        parts.append(struct.pack("<IddI", 1, domain.t_lo, domain.t_hi, domain.nt))
    else:
        parts.append(struct.pack("<I", 0))
    return b"".join(parts)


def encode(domain, channels: np.ndarray, kind: int) -> bytes:
    channels = np.asarray(channels, dtype="<f8")
    return _header(domain, kind, channels.shape[0]) + channels.tobytes(order="C")


def decode(buf: bytes):
    """Return ``(domain, kind, channels)`` from a serialized buffer."""
    magic, n, kind, ncomp = struct.unpack_from("<4sIII", buf, 0)
    if magic != MAGIC:
        raise ValueError("not a CZF1 field file")
    off = 16
    ms = struct.unpack_from(f"<{n}I", buf, off)
    off += 4 * n
    corners = struct.unpack_from(f"<{2 * n}d", buf, off)
    off += 16 * n
    if len(set(ms)) != 1:
        raise ValueError("only equal node counts per axis are supported")
    space = Domain(n, corners[:n], corners[n:], ms[0])
    (has_time,) = struct.unpack_from("<I", buf, off)
    off += 4
    domain = space
    if has_time:
        t_lo, t_hi, nt = struct.unpack_from("<ddI", buf, off)
        off += 20
        domain = SpaceTimeDomain(space, t_lo, t_hi, nt)
    count = ncomp * domain.size
    data = np.frombuffer(buf, dtype="<f8", count=count, offset=off)
    if off + 8 * count != len(buf):
        raise ValueError("payload size does not match the header")
    return domain, kind, data.reshape((ncomp,) + domain.shape).astype(np.float64)


def field_bytes(field) -> bytes:
    if isinstance(field, SymTensorField):
        return encode(field.domain, field.values, KIND_TENSOR)
    if isinstance(field, ScalarField):
        return encode(field.domain, field.values[None], KIND_SCALAR)
    from .maximal import MaximalField

    if isinstance(field, MaximalField):
        vals, arg = field.to_grid()
        return encode(field.domain, np.stack([vals, arg]), KIND_MAXIMAL)
    raise TypeError(f"cannot serialize {type(field).__name__}")


def write_field(path, field) -> None:
    Path(path).write_bytes(field_bytes(field))


def read_field(path):
    """Read a scalar or tensor field; maximal files come back as ``(domain, values, argmax)``."""
    domain, kind, ch = decode(Path(path).read_bytes())
    if kind == KIND_SCALAR:
        return ScalarField(domain, ch[0])
    if kind == KIND_TENSOR:
        return SymTensorField(domain, ch)
    if kind == KIND_MAXIMAL:
        return domain, ch[0], ch[1]
    raise ValueError(f"unknown field kind {kind}")


def write_csv(path, field) -> None:
    """Debug dump: one row per node with its coordinates and channel values."""
    domain = field.domain
    if isinstance(field, SymTensorField):
        chans = list(field.values)
        names = [f"h{i + 1}{j + 1}" for i, j in field.pairs]
    else:
        chans = [field.values]
        names = ["value"]
    coords = [np.broadcast_to(c, domain.shape).ravel() for c in domain.coords()]
    cnames = [f"x{i + 1}" for i in range(domain.space.n)]
    if isinstance(domain, SpaceTimeDomain):
        cnames = ["t"] + cnames
    flat = [c.ravel() for c in chans]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(cnames + names)
        for row in zip(*coords, *flat):
            wr.writerow([repr(float(v)) for v in row])
