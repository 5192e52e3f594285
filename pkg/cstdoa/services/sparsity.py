"""Toeplitz sparsity basis built from the reference sensor and the composed forward operator."""

import logging
from typing import Literal

import numpy as np
from scipy import fft as sp_fft
from scipy.sparse.linalg import LinearOperator

from cstdoa.exceptions import DimensionError
from cstdoa.models import SensingMatrixSpec
from cstdoa.services.msequence import DENSE_LIMIT, SensingOperator, sensing_operator

logger = logging.getLogger(__name__)

BasisMethod = Literal["auto", "fft", "direct"]

# Columns below this fraction of the largest column norm count as zero
ZERO_COLUMN = 1e-12


class SparsityBasis:
    """
    Convolution by the reference sensor's extended sample window.

    Channel index j stands for a delay of (j - L0) samples, L0 = floor(N/2).
    Acting on h gives x[m] = sum_j h[j] * window[m - j + 2*L0], where
    window[k] holds the reference sample at block-relative index k - L0.
    """

    def __init__(self, window: np.ndarray, block_length: int):
        window = np.asarray(window, dtype=np.float64)
        if window.shape != (2 * block_length + 1,):
            raise DimensionError(
                f"reference window must hold {2 * block_length + 1} samples, "
                f"got {window.shape}"
            )
        self.window = window
        self.length = block_length
        self.center = block_length // 2
        # Linear convolution of the window with a length-N vector fits in 3N
        self._size = sp_fft.next_fast_len(3 * block_length, real=True)
        self._spectrum = sp_fft.rfft(window, self._size)
        self._adjoint_index = 2 * self.center - np.arange(block_length)

    @property
    def block(self) -> np.ndarray:
        """The reference block itself (zero-lag column)."""
        return self.window[self.center : self.center + self.length]

    def _check(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (self.length,):
            raise DimensionError(f"expected vector of length {self.length}, got {v.shape}")
        return v

    def apply(self, h: np.ndarray, method: BasisMethod = "auto") -> np.ndarray:
        h = self._check(h)
        offset = 2 * self.center
        n = self.length

        support = np.flatnonzero(h)
        if method == "direct" or (method == "auto" and len(support) * 8 < n):
            x = np.zeros(n)
            for j in support:
                start = offset - j
                x += h[j] * self.window[start : start + n]
            return x

        full = sp_fft.irfft(self._spectrum * sp_fft.rfft(h, self._size), self._size)
        return full[offset : offset + n]

    def adjoint(self, r: np.ndarray) -> np.ndarray:
        r = self._check(r)
        # c[k] = sum_m window[k + m] r[m]; z[j] = c[2*L0 - j]
        c = sp_fft.irfft(self._spectrum * np.conj(sp_fft.rfft(r, self._size)), self._size)
        return c[self._adjoint_index]

    def to_dense(self) -> np.ndarray:
        m = np.arange(self.length)[:, None]
        j = np.arange(self.length)[None, :]
        return self.window[m - j + 2 * self.center]


def basis_apply(basis: SparsityBasis, h: np.ndarray, method: BasisMethod = "auto") -> np.ndarray:
    """x = psi0 h."""
    return basis.apply(h, method=method)


def basis_adjoint(basis: SparsityBasis, r: np.ndarray) -> np.ndarray:
    """z = psi0^T r (correlation with the reference window)."""
    return basis.adjoint(r)


class ForwardOperator(LinearOperator):
    """A = phi psi0 as a scipy LinearOperator."""

    def __init__(self, sensing: SensingOperator, basis: SparsityBasis):
        if sensing.length != basis.length:
            raise DimensionError(
                f"sensing matrix is sized for N={sensing.length}, basis for N={basis.length}"
            )
        self.sensing = sensing
        self.basis = basis
        super().__init__(dtype=np.float64, shape=(sensing.rows, sensing.length))

    def _matvec(self, h):
        return self.sensing.apply(self.basis.apply(np.ravel(h)))

    def _rmatvec(self, y):
        return self.basis.adjoint(self.sensing.adjoint(np.ravel(y)))

    def to_dense(self) -> np.ndarray:
        """M x N matrix row by row (row i = psi0^T phi_i), only for small test-sized instances."""
        if self.shape[1] > DENSE_LIMIT:
            raise DimensionError(
                f"refusing to materialize a {self.shape[0]}x{self.shape[1]} forward operator"
            )
        return np.stack(
            [self.basis.adjoint(self.sensing.row(i)) for i in range(self.shape[0])]
        )

    def norm_estimate(self, iterations: int = 30, tolerance: float = 1e-4) -> float:
        return spectral_norm(self, iterations=iterations, tolerance=tolerance)


def forward_operator(matrix: SensingMatrixSpec, basis: SparsityBasis) -> ForwardOperator:
    """Compose the sensing matrix with the sparsity basis."""
    return ForwardOperator(sensing_operator(matrix), basis)


def column_norms(A: LinearOperator) -> np.ndarray:
    """Euclidean norm of every column of A, accumulated from one adjoint per measurement."""
    m, n = A.shape
    squares = np.zeros(n)
    unit = np.zeros(m)
    for i in range(m):
        unit[i] = 1.0
        squares += np.ravel(A.rmatvec(unit)) ** 2
        unit[i] = 0.0
    return np.sqrt(squares)


class ScaledColumns(LinearOperator):
    """
    A diag(1/scale): A with column j divided by scale[j].

    A solution g of the scaled problem maps back to A's columns as g / scale.
    """

    def __init__(self, A: LinearOperator, scale: np.ndarray):
        scale = np.asarray(scale, dtype=np.float64)
        if scale.shape != (A.shape[1],):
            raise DimensionError(f"expected {A.shape[1]} column scales, got {scale.shape}")
        self.A = A
        self.scale = scale
        super().__init__(dtype=np.float64, shape=A.shape)

    def _matvec(self, g):
        return self.A.matvec(np.ravel(g) / self.scale)

    def _rmatvec(self, y):
        return np.ravel(self.A.rmatvec(np.ravel(y))) / self.scale


def unit_columns(A: LinearOperator) -> ScaledColumns:
    """A with every column scaled to unit norm; columns that are zero to rounding are left alone."""
    norms = column_norms(A)
    live = norms > ZERO_COLUMN * norms.max(initial=0.0)
    return ScaledColumns(A, np.where(live, norms, 1.0))


def spectral_norm(A: LinearOperator, iterations: int = 30, tolerance: float = 1e-4) -> float:
    """
    Largest singular value of A by power iteration on A^T A.

    Stops after `iterations` steps or when the estimate changes by less than
    `tolerance` relative.
    """
    n = A.shape[1]
    v = np.random.default_rng(0).standard_normal(n)
    v /= np.linalg.norm(v)

    estimate = 0.0
    for _ in range(iterations):
        w = A.rmatvec(A.matvec(v))
        norm_w = np.linalg.norm(w)
        if norm_w == 0:
            return 0.0
        previous = estimate
        estimate = np.sqrt(norm_w)
        v = w / norm_w
        if previous and abs(estimate - previous) <= tolerance * estimate:
            break
    return float(estimate)
