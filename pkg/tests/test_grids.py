import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from otfsidet.grids import GridDims, grid_from_json, grid_to_json, isfft, isfft_direct, sfft, sfft_direct

from conftest import cgrid


def _double_sum_isfft(x):
    # literal loops, independent of the matrix form in the package
    N, M = x.shape
    X = np.zeros((N, M), complex)
    for n in range(N):
        for m in range(M):
            acc = 0j
            for k in range(N):
                for l in range(M):
                    acc += x[k, l] * np.exp(2j * np.pi * (n * k / N - m * l / M))
            X[n, m] = acc / np.sqrt(N * M)
    return X


def test_dims_validation():
    assert GridDims(12, 12).size == 144
    with pytest.raises(ValueError):
        GridDims(0, 4)


def test_impulse_maps_to_constant():
    x = np.zeros((2, 2))
    x[0, 0] = 1
    np.testing.assert_allclose(isfft(x), np.full((2, 2), 0.5), atol=1e-15)


def test_constant_maps_back_to_impulse():
    expect = np.zeros((2, 2))
    expect[0, 0] = 1
    np.testing.assert_allclose(sfft(np.full((2, 2), 0.5)), expect, atol=1e-15)


def test_double_sum_oracle(rng):
    x = cgrid(rng, (12, 12))
    ref = _double_sum_isfft(x)
    assert np.max(np.abs(isfft(x) - ref)) <= 1e-10
    assert np.max(np.abs(isfft_direct(x) - ref)) <= 1e-10
    X = cgrid(rng, (12, 12))
    assert np.max(np.abs(sfft(X) - sfft_direct(X))) <= 1e-10


def test_nonsquare_oracle(rng):
    x = cgrid(rng, (3, 5))
    assert np.max(np.abs(isfft(x) - _double_sum_isfft(x))) <= 1e-12


def test_rejects_bad_input():
    with pytest.raises(ValueError):
        isfft(np.ones(4))
    with pytest.raises(ValueError):
        sfft(np.array([[np.nan, 1.0]]))


def test_json_roundtrip(rng):
    x = cgrid(rng, (3, 4))
    obj = grid_to_json(x)
    assert obj["n_slots"] == 3 and len(obj["values"]) == 12
    np.testing.assert_array_equal(grid_from_json(obj), x)
    with pytest.raises(ValueError):
        grid_from_json({"n_slots": 2, "m_subcarriers": 2, "values": [[0, 0]]})


finite = st.floats(-1e3, 1e3, allow_nan=False)
dims = st.tuples(st.integers(1, 9), st.integers(1, 9))


@st.composite
def complex_grids(draw):
    shape = draw(dims)
    re = draw(arrays(float, shape, elements=finite))
    im = draw(arrays(float, shape, elements=finite))
    return re + 1j * im


@given(complex_grids())
def test_roundtrip_both_ways(x):
    scale = max(1.0, np.max(np.abs(x)))
    assert np.max(np.abs(sfft(isfft(x)) - x)) <= 1e-10 * scale
    assert np.max(np.abs(isfft(sfft(x)) - x)) <= 1e-10 * scale


@given(complex_grids())
def test_parseval(x):
    a, b = np.linalg.norm(isfft(x)), np.linalg.norm(x)
    assert abs(a - b) <= 1e-10 * max(1.0, b)


@given(complex_grids(), finite, finite)
def test_linearity(x, a, b):
    y = np.roll(x, 1, axis=0)
    lhs = isfft(a * x + b * y)
    rhs = a * isfft(x) + b * isfft(y)
    assert np.max(np.abs(lhs - rhs)) <= 1e-10 * max(1.0, np.max(np.abs(rhs)), abs(a) * np.max(np.abs(x)) * 10)
