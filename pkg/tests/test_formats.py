import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracstrat import formats as F
from fracstrat.geometry import WeightedGrid
from fracstrat.polynomials import exact, lift_to_symmetric, model_poly, verify_weighted_harmonic


def test_grid_dump_round_trip():
    g = WeightedGrid(2, 1 / 8, 1.0, 1.5, -0.5)
    back = F.load_grid(F.dump_grid(g))
    assert (back.n, back.h, back.L, back.Y, back.a, back.doubled) == (g.n, g.h, g.L, g.Y, g.a, g.doubled)
    assert back.node_count == g.node_count


def test_grid_dump_rejects_inconsistent_count():
    text = F.dump_grid(WeightedGrid(1, 1 / 8, 1.0, 1.0, 0.0)).splitlines()
    with pytest.raises(F.FormatError):
        F.load_grid(text[0] + "\n7\n")
    with pytest.raises(F.FormatError):
        F.load_grid("n=1 h\n3\n")


def test_solution_round_trip_keeps_y_first(tmp_path):
    g = WeightedGrid(2, 1 / 4, 1.0, 1.0, 0.5)
    rng = np.random.default_rng(0)
    vals = rng.normal(size=g.shape)
    path = tmp_path / "u.bin"
    F.write_solution(path, g, 0.25, vals)
    g2, gamma, back = F.read_solution(path)
    assert gamma == 0.25 and g2.shape == g.shape
    np.testing.assert_array_equal(back, vals)
    # the first stored values are the bottom row
    raw = path.read_bytes()
    body = raw[raw.index(b"\n", raw.index(b"\n") + 1) + 1:]
    np.testing.assert_array_equal(np.frombuffer(body, "<f8")[:g.nx], vals[0, 0])


def test_truncated_solution_is_rejected(tmp_path):
    g = WeightedGrid(1, 1 / 4, 1.0, 1.0, 0.0)
    path = tmp_path / "u.bin"
    F.write_solution(path, g, 0.5, np.zeros(g.shape))
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(F.FormatError):
        F.read_solution(path)


@pytest.mark.parametrize("d,a,m", [(2, 0.5, 2), (3, -0.5, 3), (4, 0.0, 4)])
def test_polynomial_round_trip_is_exact(d, a, m):
    P = model_poly(d, exact(a))
    if m > 2:
        P = lift_to_symmetric(P, m)
    text = F.dump_polynomial(P)
    assert "scale=" in text.splitlines()[0]
    Q = F.load_polynomial(text)
    assert Q.poly.terms == P.poly.terms
    assert Q.degree == d and Q.a == P.a and Q.symmetry_rank == P.symmetry_rank
    assert Q.scale == P.scale
    assert verify_weighted_harmonic(Q).is_zero


@pytest.mark.parametrize("text", ["", "n=1 d=2\n1 2 0\n", "n=1 d=2 a=0 k_sym=1\n1 2\n",
                                  "n=1 d=2 a=0 k_sym=1\nx 2 0\n"])
def test_malformed_polynomial_files(text):
    with pytest.raises(F.FormatError):
        F.load_polynomial(text)


@settings(max_examples=50, deadline=None)
@given(vals=st.lists(st.floats(allow_nan=False, allow_infinity=False), min_size=1, max_size=20))
def test_csv_floats_round_trip_bit_exact(tmp_path_factory, vals):
    path = tmp_path_factory.mktemp("csv") / "t.csv"
    F.write_csv(path, ["v", "i"], [(v, i) for i, v in enumerate(vals)])
    header, rows = F.read_csv(path)
    assert header == ["v", "i"]
    back = np.array([float(r[0]) for r in rows])
    np.testing.assert_array_equal(back.view(np.uint64), np.array(vals, dtype=float).view(np.uint64))
    assert [int(r[1]) for r in rows] == list(range(len(vals)))


def test_csv_reruns_are_byte_identical(tmp_path):
    rows = [(0.1 * i, np.float64(1 / 3) * i, "tag") for i in range(5)]
    F.write_csv(tmp_path / "a.csv", ["x", "y", "s"], rows)
    F.write_csv(tmp_path / "b.csv", ["x", "y", "s"], rows)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_table_aligns_columns():
    out = F.table(["a", "long"], [(1, 2.5), (10, "x")]).splitlines()
    # the second column starts at the same offset on every line
    assert {ln.index(tok) for ln, tok in zip(out, ["long", "2.5", "x"])} == {4}
    assert F.table(["v"], [(1 / 3,)]).splitlines()[1] == "0.333333"
