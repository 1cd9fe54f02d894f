import csv

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from czlab import fieldio
from czlab.fields import Domain, ScalarField, SpaceTimeDomain, hessian
from czlab.maximal import sharp_maximal_2


@given(st.integers(1, 3), st.integers(8, 12), st.integers(0, 2**31 - 1))
def test_scalar_roundtrip_bitwise(n, m, seed):
    d = Domain.box(n, m)
    u = ScalarField(d, np.random.default_rng(seed).normal(size=d.shape))
    dom, kind, ch = fieldio.decode(fieldio.field_bytes(u))
    assert dom == d and kind == fieldio.KIND_SCALAR
    assert ch[0].tobytes() == u.values.tobytes()


def test_files_roundtrip(tmp_path):
    sd = SpaceTimeDomain(Domain.box(2, 9), -0.5, 0.5, 8)
    u = ScalarField.from_function(sd, lambda t, x, y: t + x * y)
    fieldio.write_field(tmp_path / "u.czf", u)
    back = fieldio.read_field(tmp_path / "u.czf")
    assert back.domain == sd
    np.testing.assert_array_equal(back.values, u.values)

    d = Domain.box(2, 12)
    H = hessian(ScalarField.from_function(d, lambda x, y: x**3 * y))
    fieldio.write_field(tmp_path / "h.czf", H)
    np.testing.assert_array_equal(fieldio.read_field(tmp_path / "h.czf").values, H.values)

    mf = sharp_maximal_2(ScalarField.from_function(d, lambda x, y: x + 0 * y))
    fieldio.write_field(tmp_path / "m.czf", mf)
    dom, vals, arg = fieldio.read_field(tmp_path / "m.czf")
    ref_vals, ref_arg = mf.to_grid()
    np.testing.assert_array_equal(vals, ref_vals)
    np.testing.assert_array_equal(arg, ref_arg)


def test_corrupt_input_rejected():
    u = ScalarField(Domain.box(2, 8), np.zeros((8, 8)))
    blob = fieldio.field_bytes(u)
    with pytest.raises(ValueError):
        fieldio.decode(b"XXXX" + blob[4:])
    with pytest.raises(ValueError):
        fieldio.decode(blob[:-8])


def test_csv_dump(tmp_path):
    d = Domain.box(2, 8)
    u = ScalarField.from_function(d, lambda x, y: x - y)
    fieldio.write_csv(tmp_path / "u.csv", u)
    rows = list(csv.reader(open(tmp_path / "u.csv")))
    assert rows[0] == ["x1", "x2", "value"]
    assert len(rows) == 1 + d.size
    x, y, v = map(float, rows[1])
    assert v == x - y
