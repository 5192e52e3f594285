"""Tests for the Toeplitz sparsity basis and the composed forward operator."""

import numpy as np
import pytest

from cstdoa.exceptions import DimensionError
from cstdoa.models import MSequenceSpec, SensingMatrixSpec
from cstdoa.services.msequence import apply_sensing, keep_rows
from cstdoa.services.sparsity import (
    SparsityBasis,
    basis_adjoint,
    basis_apply,
    forward_operator,
    column_norms,
    unit_columns,
    spectral_norm,
)

N = 15
L0 = N // 2


def toeplitz_oracle(window):
    return np.array([[window[m - j + 2 * L0] for j in range(N)] for m in range(N)])


@pytest.fixture
def basis(rng):
    return SparsityBasis(rng.standard_normal(2 * N + 1), N)


def test_center_impulse_returns_reference_block(basis):
    h = np.zeros(N)
    h[L0] = 1.0
    np.testing.assert_allclose(basis_apply(basis, h), basis.window[L0 : L0 + N], atol=1e-12)
    np.testing.assert_array_equal(basis.block, basis.window[L0 : L0 + N])


@pytest.mark.parametrize("delay", [-5, -1, 1, 3, 7])
def test_shifted_impulse_delays_reference(basis, delay):
    h = np.zeros(N)
    h[L0 + delay] = 1.0
    # x[m] is the reference sample at block index m - delay
    expected = basis.window[L0 - delay : L0 - delay + N]
    np.testing.assert_allclose(basis_apply(basis, h), expected, atol=1e-12)


def test_apply_matches_dense(basis, rng):
    dense = toeplitz_oracle(basis.window)
    np.testing.assert_array_equal(basis.to_dense(), dense)
    for _ in range(20):
        h = rng.standard_normal(N)
        np.testing.assert_allclose(basis_apply(basis, h), dense @ h, atol=1e-9)


def test_fft_and_direct_paths_agree(rng):
    n = 255
    basis = SparsityBasis(rng.standard_normal(2 * n + 1), n)
    h = np.zeros(n)
    h[rng.choice(n, size=6, replace=False)] = rng.standard_normal(6)
    np.testing.assert_allclose(
        basis.apply(h, method="fft"), basis.apply(h, method="direct"), atol=1e-9
    )


def test_adjoint_identity_and_dense(basis, rng):
    dense = toeplitz_oracle(basis.window)
    for _ in range(100):
        h = rng.standard_normal(N)
        r = rng.standard_normal(N)
        lhs = basis_apply(basis, h) @ r
        rhs = h @ basis_adjoint(basis, r)
        assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))
    r = rng.standard_normal(N)
    np.testing.assert_allclose(basis_adjoint(basis, r), dense.T @ r, atol=1e-9)


def test_adjoint_of_zero(basis):
    assert not np.any(basis_adjoint(basis, np.zeros(N)))


def test_adjoint_of_reference_peaks_at_center(rng):
    n = 63
    window = np.zeros(2 * n + 1)
    window[n // 2 : n // 2 + n] = rng.standard_normal(n)
    basis = SparsityBasis(window, n)
    z = basis_adjoint(basis, basis.block)
    assert int(np.argmax(z)) == n // 2


def test_shift_of_h_shifts_output_in_interior(basis, rng):
    h = np.zeros(N)
    h[L0 - 2 : L0 + 3] = rng.standard_normal(5)
    x = basis_apply(basis, h)
    x_shifted = basis_apply(basis, np.roll(h, 1))
    np.testing.assert_allclose(x_shifted[1:], x[:-1], atol=1e-12)


def test_wrong_lengths_raise(basis):
    with pytest.raises(DimensionError):
        SparsityBasis(np.zeros(2 * N), N)
    with pytest.raises(DimensionError):
        basis_apply(basis, np.zeros(N + 1))
    with pytest.raises(DimensionError):
        basis_adjoint(basis, np.zeros(N - 1))


@pytest.fixture
def matrix():
    return SensingMatrixSpec(mseq=MSequenceSpec(degree=4), rows=5)


def test_forward_operator_composition(matrix, basis, rng):
    A = forward_operator(matrix, basis)
    assert A.shape == (5, N)
    assert not np.any(A.matvec(np.zeros(N)))
    for _ in range(20):
        h = rng.standard_normal(N)
        composed = A.matvec(h)
        np.testing.assert_array_equal(composed, apply_sensing(matrix, basis_apply(basis, h)))


def test_forward_operator_adjoint_and_dense(matrix, basis, rng):
    A = forward_operator(matrix, basis)
    dense = A.to_dense()
    for _ in range(100):
        h = rng.standard_normal(N)
        y = rng.standard_normal(5)
        lhs = A.matvec(h) @ y
        rhs = h @ A.rmatvec(y)
        assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))
    h = rng.standard_normal(N)
    np.testing.assert_allclose(dense @ h, A.matvec(h), atol=1e-9)


def test_mismatched_sizes_raise(basis):
    with pytest.raises(DimensionError):
        forward_operator(SensingMatrixSpec(mseq=MSequenceSpec(degree=5), rows=5), basis)


def test_spectral_norm_close_to_largest_singular_value(matrix, basis):
    A = forward_operator(matrix, basis)
    sigma = np.linalg.svd(A.to_dense(), compute_uv=False)[0]
    assert abs(A.norm_estimate() - sigma) <= 0.01 * sigma


def test_kept_rows_operator_matches_dense_rows(matrix, basis, rng):
    dense = forward_operator(matrix, basis).to_dense()
    keep = [0, 2, 4]
    sub = forward_operator(keep_rows(matrix, keep), basis)
    assert sub.shape == (3, N)
    np.testing.assert_allclose(sub.to_dense(), dense[keep], atol=1e-12)
    h = rng.standard_normal(N)
    np.testing.assert_allclose(sub.matvec(h), dense[keep] @ h, atol=1e-9)
    assert spectral_norm(sub) <= 1.02 * spectral_norm(forward_operator(matrix, basis))


def test_dense_forward_operator_refused_for_large_blocks(rng):
    n = 255
    big = forward_operator(
        SensingMatrixSpec(mseq=MSequenceSpec(degree=8), rows=16),
        SparsityBasis(rng.standard_normal(2 * n + 1), n),
    )
    with pytest.raises(DimensionError):
        big.to_dense()


def test_column_norms_match_dense(matrix, basis):
    A = forward_operator(matrix, basis)
    np.testing.assert_allclose(column_norms(A), np.linalg.norm(A.to_dense(), axis=0), rtol=1e-12)


def test_unit_columns_scale_every_column(matrix, basis, rng):
    A = forward_operator(matrix, basis)
    scaled = unit_columns(A)
    dense = A.to_dense() / np.linalg.norm(A.to_dense(), axis=0)
    np.testing.assert_allclose(column_norms(scaled), np.ones(N), rtol=1e-12)
    g = rng.standard_normal(N)
    y = rng.standard_normal(5)
    np.testing.assert_allclose(scaled.matvec(g), dense @ g, atol=1e-9)
    np.testing.assert_allclose(scaled.rmatvec(y), dense.T @ y, atol=1e-9)


def test_zero_columns_keep_unit_scale():
    window = np.zeros(2 * N + 1)
    window[0] = 1.0
    A = forward_operator(SensingMatrixSpec(mseq=MSequenceSpec(degree=4), rows=5), SparsityBasis(window, N))
    norms = column_norms(A)
    dead = norms < 1e-12 * norms.max()
    assert dead[:2 * L0].all() and not dead[2 * L0]
    np.testing.assert_array_equal(unit_columns(A).scale[dead], 1.0)
