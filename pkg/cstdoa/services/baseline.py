"""Full-rate cross-correlation TDOA, the comparison method."""

import logging
from typing import Optional, Tuple

import numpy as np

from cstdoa.exceptions import DimensionError, NoPeakError
from cstdoa.models import TdoaReport
from cstdoa.services.tdoa import max_lag_for, parabolic_offset

logger = logging.getLogger(__name__)


def cross_correlate(
    x1: np.ndarray, x2: np.ndarray, max_lag: int
) -> Tuple[np.ndarray, np.ndarray]:
    """
    r(tau) = sum_i x1[i] * x2[i + tau] for tau in [-max_lag, max_lag].

    Samples outside the blocks count as zero. A copy of x1 delayed by D
    samples in x2 peaks at tau = D.

    Returns:
        (lags, r)
    """
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    if x1.shape != x2.shape or x1.ndim != 1:
        raise DimensionError(f"blocks must have equal 1-D shapes, got {x1.shape} and {x2.shape}")
    n = len(x1)
    if not 0 <= max_lag < n:
        raise DimensionError(f"max_lag must lie in [0, {n}), got {max_lag}")

    lags = np.arange(-max_lag, max_lag + 1)
    r = np.empty(len(lags))
    for k, tau in enumerate(lags):
        if tau >= 0:
            r[k] = x1[: n - tau] @ x2[tau:]
        else:
            r[k] = x1[-tau:] @ x2[: n + tau]
    return lags, r


def best_lag_index(lags: np.ndarray, r: np.ndarray) -> int:
    """Index of the global maximum, ties going to the smallest |tau|."""
    best = r.max()
    candidates = np.flatnonzero(r == best)
    return int(candidates[np.argmin(np.abs(lags[candidates]))])


def tdoa_xcorr(
    x1: np.ndarray,
    x2: np.ndarray,
    sample_period: float,
    max_delay: Optional[float] = None,
    sensor_id: int = 0,
    block_index: int = 0,
    refine: bool = True,
) -> TdoaReport:
    """
    Delay of x2 relative to x1 from the cross-correlation maximum.

    Args:
        x1: Reference block
        x2: Sensor block, same length
        sample_period: Seconds per sample
        max_delay: Admissible delay bound in seconds (d_max / c); all lags
            up to N-1 when omitted

    Returns:
        TdoaReport with method "xcorr" and confidence None (not applicable)

    Raises:
        NoPeakError: either block is all zero
    """
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    if not np.any(x1) or not np.any(x2):
        raise NoPeakError("cross-correlation of an all-zero block")

    max_lag = max_lag_for(max_delay, sample_period)
    if max_lag is None:
        max_lag = len(x1) - 1
    max_lag = min(max_lag, len(x1) - 1)

    lags, r = cross_correlate(x1, x2, max_lag)
    k = best_lag_index(lags, r)
    lag = float(lags[k])
    if refine:
        lag += parabolic_offset(r, k)

    delay = lag * sample_period
    if max_delay is not None:
        delay = min(max_delay, max(-max_delay, delay))

    return TdoaReport(
        sensor_id=sensor_id,
        block_index=block_index,
        method="xcorr",
        delay=delay,
        confidence=None,
        accepted=True,
    )
