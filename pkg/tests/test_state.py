import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from otafl import ConfigurationError, SparseMask, apply_mask, full_mask, scatter
from otafl.state import abs_values, add, l2_norm_sq, scale


def test_apply_mask_hand_example():
    mask = SparseMask([0, 2], d=3)
    np.testing.assert_array_equal(apply_mask(mask, [7.0, -1.0, 3.0]), [7.0, 3.0])


def test_apply_full_mask_is_identity():
    g = np.array([3.0, -1.0, 2.5, 0.0])
    np.testing.assert_array_equal(apply_mask(full_mask(4), g), g)


def test_apply_mask_zero_vector():
    np.testing.assert_array_equal(apply_mask(SparseMask([1], 2), [0.0, 0.0]), [0.0])


def test_scatter_hand_example():
    mask = SparseMask([1, 3], d=4)
    np.testing.assert_array_equal(scatter(mask, [5.0, -2.0]), [0.0, 5.0, 0.0, -2.0])


def test_scatter_full_mask_round_trip():
    g = np.array([1.5, -2.0, 0.25])
    np.testing.assert_array_equal(scatter(full_mask(3), apply_mask(full_mask(3), g)), g)


def test_scatter_zero_compressed():
    np.testing.assert_array_equal(scatter(SparseMask([0, 2], 3), [0.0, 0.0]), np.zeros(3))


def test_dimension_mismatches_rejected():
    mask = SparseMask([0, 1], d=3)
    with pytest.raises(ConfigurationError):
        apply_mask(mask, [1.0, 2.0])
    with pytest.raises(ConfigurationError):
        scatter(mask, [1.0, 2.0, 3.0])
    with pytest.raises(ConfigurationError):
        add([1.0], [1.0, 2.0])


def test_mask_validation():
    with pytest.raises(ConfigurationError):
        SparseMask([0, 0], d=3)          # duplicate
    with pytest.raises(ConfigurationError):
        SparseMask([3], d=3)             # out of range
    with pytest.raises(ConfigurationError):
        SparseMask([-1], d=3)
    with pytest.raises(ConfigurationError):
        SparseMask([], d=3)


def test_mask_indices_sorted_and_frozen():
    mask = SparseMask([4, 1, 2], d=5)
    np.testing.assert_array_equal(mask.indices, [1, 2, 4])
    with pytest.raises(ValueError):
        mask.indices[0] = 3


def test_selector_matrix_views():
    # compact selector has orthonormal rows; its Gram matrix is the diagonal view
    mask = SparseMask([1, 3, 4], d=6)
    s_hat = mask.as_compact()
    np.testing.assert_array_equal(s_hat @ s_hat.T, np.eye(3))
    np.testing.assert_array_equal(s_hat.T @ s_hat, np.diag(mask.as_diagonal()))
    assert mask.as_diagonal().sum() == mask.k
    # apply/scatter agree with explicit matrix multiplication
    g = np.arange(6, dtype=float) - 2.5
    np.testing.assert_array_equal(apply_mask(mask, g), s_hat @ g)
    np.testing.assert_array_equal(scatter(mask, s_hat @ g), s_hat.T @ (s_hat @ g))


def test_vector_ops_trivia():
    assert l2_norm_sq([3.0, 4.0]) == 25.0
    np.testing.assert_array_equal(add([1.0, 2.0], [-1.0, -2.0]), [0.0, 0.0])
    np.testing.assert_array_equal(scale([1.0, 2.0], 0.5), [0.5, 1.0])
    np.testing.assert_array_equal(abs_values([-1.0, 2.0]), [1.0, 2.0])


@st.composite
def vector_and_mask(draw):
    d = draw(st.integers(min_value=1, max_value=40))
    values = draw(
        st.lists(
            st.floats(min_value=-1e6, max_value=1e6, allow_nan=False),
            min_size=d, max_size=d,
        )
    )
    k = draw(st.integers(min_value=1, max_value=d))
    indices = draw(st.permutations(range(d)))[:k]
    return np.array(values), SparseMask(indices, d)


@given(vector_and_mask())
@settings(max_examples=200, deadline=None)
def test_energy_decomposition(vm):
    g, mask = vm
    kept = scatter(mask, apply_mask(mask, g))
    outside = g - kept
    assert l2_norm_sq(g) == pytest.approx(l2_norm_sq(kept) + l2_norm_sq(outside), rel=1e-12, abs=1e-9)
    # off-mask entries of the reconstruction are exactly zero
    off = np.setdiff1d(np.arange(mask.d), mask.indices)
    assert not kept[off].any()


@given(vector_and_mask())
@settings(max_examples=100, deadline=None)
def test_scatter_apply_idempotent(vm):
    g, mask = vm
    once = scatter(mask, apply_mask(mask, g))
    twice = scatter(mask, apply_mask(mask, once))
    np.testing.assert_array_equal(once, twice)
