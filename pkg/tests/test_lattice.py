import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sandpile.errors import InvalidConfig
from sandpile.lattice import (
    Direction,
    LatticeField,
    directions,
    discrete_derivative,
    discrete_laplacian,
    grow,
    laplacian_array,
    neighbors,
    read_csv,
    shift_sum,
    write_csv,
)


def test_neighbors_fixed_order_2d():
    assert neighbors((0, 0), 2) == [(-1, 0), (1, 0), (0, -1), (0, 1)]


def test_neighbors_3d_are_unit_l1():
    out = neighbors((1, 2, 3), 3)
    assert len(out) == 6 == len(set(out))
    assert all(sum(abs(a - b) for a, b in zip(y, (1, 2, 3))) == 1 for y in out)


@given(st.lists(st.integers(-50, 50), min_size=2, max_size=5))
def test_neighbors_distance_one(x):
    out = neighbors(x)
    assert len(out) == 2 * len(x)
    for y in out:
        assert sum(abs(a - b) for a, b in zip(x, y)) == 1


def test_directions_are_2d_distinct():
    for d in (2, 3, 4):
        dirs = directions(d)
        assert len(set(dirs)) == 2 * d
        assert [e.vector(d) for e in dirs] == neighbors((0,) * d, d)


def test_field_rejects_dimension_one():
    with pytest.raises(InvalidConfig):
        LatticeField.zeros(1, 3)


def test_out_of_box_reads_are_zero_and_writes_raise():
    f = LatticeField.zeros(2, 2)
    f[(2, -2)] = 3.0
    assert f[(2, -2)] == 3.0
    assert f[(3, 0)] == 0.0
    with pytest.raises(IndexError):
        f[(3, 0)] = 1.0


def test_laplacian_of_constant_is_zero():
    f = LatticeField(2, 3, np.full((7, 7), 2.5))
    assert all(discrete_laplacian(f, x) == 0 for x in [(0, 0), (2, -2), (1, 2)])


def test_laplacian_of_indicator():
    f = LatticeField.zeros(2, 2)
    f[(0, 0)] = 1.0
    assert discrete_laplacian(f, (0, 0)) == -1.0
    assert discrete_laplacian(f, (1, 0)) == 0.25


@pytest.mark.parametrize("d", [2, 3, 4])
def test_laplacian_of_norm_squared_is_one(d):
    f = LatticeField.zeros(d, 3)
    f.values[:] = f.norm2_squared()
    for x in [(0,) * d, (1,) * d, tuple(range(-1, d - 1))]:
        assert discrete_laplacian(f, x) == pytest.approx(1.0, abs=1e-14)


def test_derivative_examples():
    f = LatticeField.zeros(2, 2)
    f[(0, 0)] = 1.0
    assert discrete_derivative(f, (0, 0), Direction(0, 1)) == -1.0
    g = LatticeField(2, 2, np.broadcast_to(np.arange(-2, 3)[:, None], (5, 5)).astype(float).copy())
    assert discrete_derivative(g, (0, 0), Direction(0, 1)) == 1.0
    assert discrete_derivative(g, (0, 0), Direction(0, -1)) == -1.0
    c = LatticeField(2, 2, np.full((5, 5), 7.0))
    assert all(discrete_derivative(c, (0, 0), e) == 0 for e in directions(2))


@given(arrays(np.float64, (7, 7), elements=st.floats(-1e3, 1e3)), st.integers(-2, 2), st.integers(-2, 2))
def test_telescoping_identity(values, a, b):
    f = LatticeField(2, 3, values)
    x = (a, b)
    total = sum(discrete_derivative(f, x, e) for e in directions(2))
    assert 4 * discrete_laplacian(f, x) == pytest.approx(total, rel=1e-12, abs=1e-9)


@given(arrays(np.float64, (5, 5, 5), elements=st.floats(-1e3, 1e3)))
def test_vectorised_laplacian_matches_pointwise(values):
    f = LatticeField(3, 2, values)
    lap = laplacian_array(values)
    for x in [(0, 0, 0), (2, 2, 2), (-2, 1, 0)]:
        assert lap[f.index(x)] == pytest.approx(discrete_laplacian(f, x), rel=1e-12, abs=1e-9)


def test_shift_sum_is_linear():
    rng = np.random.default_rng(1)
    a, b = rng.random((9, 9)), rng.random((9, 9))
    np.testing.assert_allclose(shift_sum(2 * a + b), 2 * shift_sum(a) + shift_sum(b), rtol=1e-14)


def test_grow_preserves_values_and_sum():
    f = LatticeField(2, 1, np.arange(9, dtype=float).reshape(3, 3))
    g = grow(f, 2)
    assert g.values.shape == (5, 5)
    assert np.count_nonzero(g.values == 0) == 16 + 1  # the original 0 at (-1,-1)
    assert all(g[x] == f[x] for x in f)
    assert g.values.sum() == f.values.sum()
    np.testing.assert_array_equal(grow(grow(f, 2), 4).values, grow(f, 4).values)


def test_grow_rejects_shrinking():
    with pytest.raises(InvalidConfig):
        grow(LatticeField.zeros(2, 3), 3)


def test_csv_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(7)
    u = LatticeField(2, 3, rng.random((7, 7)) * 1e5)
    mu = LatticeField(2, 3, rng.random((7, 7)) / 3)
    visited = rng.random((7, 7)) < 0.5
    path = tmp_path / "f.csv"
    write_csv(path, u, mu, visited)
    assert path.read_text().splitlines()[0] == "x1,x2,u,mu"
    coords, uu, mm = read_csv(path)
    idx = tuple((coords + 3).T)
    np.testing.assert_array_equal(uu, u.values[idx])
    np.testing.assert_array_equal(mm, mu.values[idx])
    assert len(coords) == visited.sum()
