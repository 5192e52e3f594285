"""Maximum-length sequences and the shifted m-sequence sensing matrix."""

import logging
from functools import lru_cache
from typing import Dict, Sequence, Tuple

import numpy as np
from scipy import fft as sp_fft

from cstdoa.exceptions import DimensionError, InvalidSpecError, PeriodMismatchError
from cstdoa.models import MAX_DEGREE, MIN_DEGREE, MSequenceSpec, SensingMatrixSpec

logger = logging.getLogger(__name__)

# One primitive polynomial per degree, as masks with bit e set for each x^e term
PRIMITIVE_POLYNOMIALS: Dict[int, int] = {
    2: 0x7,  # x^2 + x + 1
    3: 0xB,  # x^3 + x + 1
    4: 0x13,  # x^4 + x + 1
    5: 0x25,  # x^5 + x^2 + 1
    6: 0x43,  # x^6 + x + 1
    7: 0x83,  # x^7 + x + 1
    8: 0x11D,  # x^8 + x^4 + x^3 + x^2 + 1
    9: 0x211,  # x^9 + x^4 + 1
    10: 0x409,  # x^10 + x^3 + 1
    11: 0x805,  # x^11 + x^2 + 1
    12: 0x1053,  # x^12 + x^6 + x^4 + x + 1
    13: 0x201B,  # x^13 + x^4 + x^3 + x + 1
    14: 0x4443,  # x^14 + x^10 + x^6 + x + 1
    15: 0x8003,  # x^15 + x + 1
    16: 0x1100B,  # x^16 + x^12 + x^3 + x + 1
}

# Matrices up to this size may be materialized densely
DENSE_LIMIT = 64


def taps_from_mask(mask: int) -> Tuple[int, ...]:
    """Polynomial mask -> tap exponents (constant term dropped), highest first."""
    return tuple(e for e in range(mask.bit_length() - 1, 0, -1) if mask >> e & 1)


def default_taps(degree: int) -> Tuple[int, ...]:
    """Built-in primitive polynomial taps for a degree."""
    if degree not in PRIMITIVE_POLYNOMIALS:
        raise InvalidSpecError(
            f"Unsupported m-sequence degree {degree} "
            f"(supported: {MIN_DEGREE}..{MAX_DEGREE})"
        )
    return taps_from_mask(PRIMITIVE_POLYNOMIALS[degree])


def _resolve_taps(spec: MSequenceSpec) -> Tuple[int, ...]:
    if spec.degree < MIN_DEGREE or spec.degree > MAX_DEGREE:
        raise InvalidSpecError(
            f"Unsupported m-sequence degree {spec.degree} "
            f"(supported: {MIN_DEGREE}..{MAX_DEGREE})"
        )
    if spec.seed == 0:
        raise InvalidSpecError("LFSR seed must be nonzero (all-zero state is absorbing)")
    if spec.seed < 0 or spec.seed >= 1 << spec.degree:
        raise InvalidSpecError(f"LFSR seed must fit in {spec.degree} bits")
    taps = spec.taps or default_taps(spec.degree)
    if max(taps) != spec.degree or min(taps) < 1:
        raise InvalidSpecError(
            f"taps {taps} must lie in 1..{spec.degree} and include the degree"
        )
    return tuple(sorted(set(taps), reverse=True))


@lru_cache(maxsize=64)
def _period(degree: int, taps: Tuple[int, ...], seed: int) -> np.ndarray:
    # Recurrence a[n+k] = a[n] xor a[n+e] for each tap e < k; bit i of the
    # state holds a[n+i].
    n = (1 << degree) - 1
    feedback = 1
    for e in taps:
        if e < degree:
            feedback |= 1 << e

    bits = np.empty(n, dtype=np.uint8)
    state = seed
    top = degree - 1
    for i in range(n):
        if i > 0 and state == seed:
            raise PeriodMismatchError(
                f"taps {taps} give period {i}, expected {n}: polynomial is not primitive"
            )
        bits[i] = state & 1
        fb = (state & feedback).bit_count() & 1
        state = (state >> 1) | (fb << top)

    bits.setflags(write=False)
    logger.debug(f"Generated m-sequence of degree {degree} (period {n})")
    return bits


def generate_msequence(spec: MSequenceSpec) -> np.ndarray:
    """
    One full period of the LFSR output.

    Args:
        spec: Degree, taps and nonzero seed state

    Returns:
        Read-only uint8 array of length 2^k - 1

    Raises:
        InvalidSpecError: zero seed, unsupported degree or malformed taps
        PeriodMismatchError: taps are not a primitive polynomial
    """
    taps = _resolve_taps(spec)
    return _period(spec.degree, taps, spec.seed)


def row_shifts(matrix: SensingMatrixSpec) -> np.ndarray:
    """Shift of each row into the m-sequence period, base offset included."""
    n = matrix.length
    m = matrix.rows
    if m < 1 or m > n:
        raise InvalidSpecError(f"rows must lie in 1..{n}, got {m}")

    if matrix.row_shift_offsets is None:
        shifts = np.arange(m, dtype=np.int64) * (n // m)
    else:
        shifts = np.asarray(matrix.row_shift_offsets, dtype=np.int64)
        if len(shifts) != m:
            raise InvalidSpecError(f"expected {m} row shifts, got {len(shifts)}")
        if np.any(shifts < 0) or np.any(shifts >= n):
            raise InvalidSpecError(f"row shifts must lie in [0, {n})")

    shifts = (shifts + matrix.base_shift) % n
    if len(np.unique(shifts)) != m:
        raise InvalidSpecError("row shifts must be distinct")
    return shifts


def keep_rows(matrix: SensingMatrixSpec, keep: Sequence[int]) -> SensingMatrixSpec:
    """The sensing matrix made of the listed rows only, in the given order."""
    keep = np.asarray(keep, dtype=np.intp)
    if keep.size == 0:
        raise InvalidSpecError("at least one row must be kept")
    if np.any(keep < 0) or np.any(keep >= matrix.rows):
        raise InvalidSpecError(f"kept rows must lie in [0, {matrix.rows})")
    n = matrix.length
    if matrix.row_shift_offsets is None:
        offsets = np.arange(matrix.rows, dtype=np.int64) * (n // matrix.rows)
    else:
        offsets = np.asarray(matrix.row_shift_offsets, dtype=np.int64)
    return matrix.model_copy(
        update={
            "rows": int(keep.size),
            "row_shift_offsets": tuple(int(s) for s in offsets[keep]),
        }
    )


class SensingOperator:
    """Matrix-free view of phi with entries 1 - 2 p[(j + shift_i) mod N]."""

    def __init__(self, matrix: SensingMatrixSpec):
        self.spec = matrix
        self.length = matrix.length
        self.rows = matrix.rows
        self.shifts = row_shifts(matrix)
        self.signs = 1.0 - 2.0 * generate_msequence(matrix.mseq).astype(np.float64)
        self._signs_spectrum = sp_fft.rfft(self.signs)

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.rows, self.length)

    def _correlate(self, v: np.ndarray) -> np.ndarray:
        # c[k] = sum_j signs[(j + k) mod N] v[j]
        spectrum = self._signs_spectrum * np.conj(sp_fft.rfft(v))
        return sp_fft.irfft(spectrum, n=self.length)

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.length,):
            raise DimensionError(f"expected vector of length {self.length}, got {x.shape}")
        return self._correlate(x)[self.shifts]

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        if y.shape != (self.rows,):
            raise DimensionError(f"expected vector of length {self.rows}, got {y.shape}")
        scattered = np.zeros(self.length)
        scattered[self.shifts] = y
        return self._correlate(scattered)

    def row(self, i: int) -> np.ndarray:
        return np.roll(self.signs, -int(self.shifts[i]))

    def to_dense(self) -> np.ndarray:
        """Dense matrix, only for small test-sized instances."""
        if self.length > DENSE_LIMIT:
            raise DimensionError(
                f"refusing to materialize a {self.rows}x{self.length} sensing matrix"
            )
        return np.stack([self.row(i) for i in range(self.rows)])


@lru_cache(maxsize=32)
def sensing_operator(matrix: SensingMatrixSpec) -> SensingOperator:
    """Cached operator for a sensing matrix spec."""
    return SensingOperator(matrix)


def apply_sensing(matrix: SensingMatrixSpec, x: np.ndarray) -> np.ndarray:
    """Compressive measurements y = phi x."""
    return sensing_operator(matrix).apply(x)


def apply_sensing_adjoint(matrix: SensingMatrixSpec, y: np.ndarray) -> np.ndarray:
    """Back-projection z = phi^T y."""
    return sensing_operator(matrix).adjoint(y)
