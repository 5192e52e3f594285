"""Delay extraction from channel estimates and the jackknife confidence indicator."""

import logging
import math
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse.linalg import LinearOperator

from cstdoa.exceptions import ConfigError, CstdoaError, NoPeakError
from cstdoa.models import ChannelEstimate, JackknifeConfig, SolverConfig, TdoaReport
from cstdoa.services.solver import recover

logger = logging.getLogger(__name__)

# Confidence of a jackknife whose repetitions all agree
CONFIDENCE_INF = math.inf

MIN_REPETITIONS = 3

OperatorBuilder = Callable[[np.ndarray], LinearOperator]


def parabolic_offset(values: np.ndarray, peak: int) -> float:
    """Vertex of the parabola through values[peak-1..peak+1], relative to peak, within +-0.5."""
    if peak <= 0 or peak >= len(values) - 1:
        return 0.0
    left, center, right = values[peak - 1], values[peak], values[peak + 1]
    denom = left - 2.0 * center + right
    if denom >= 0:
        return 0.0
    offset = 0.5 * (left - right) / denom
    return float(min(0.5, max(-0.5, offset)))


def max_lag_for(max_delay: Optional[float], sample_period: float) -> Optional[int]:
    """Largest lag in samples admitted by a delay bound, one sample of slack included."""
    if max_delay is None:
        return None
    return int(math.ceil(max_delay / sample_period - 1e-9)) + 1


def peak_index(h: np.ndarray, max_lag: Optional[int] = None) -> int:
    """argmax |h|, optionally restricted to |j - floor(N/2)| <= max_lag."""
    magnitude = np.abs(h)
    lo, hi = 0, len(h)
    if max_lag is not None:
        center = len(h) // 2
        lo = max(0, center - max_lag)
        hi = min(len(h), center + max_lag + 1)
    peak = lo + int(np.argmax(magnitude[lo:hi]))
    if magnitude[peak] == 0.0:
        raise NoPeakError("channel estimate is zero over the admissible lags")
    return peak


def delay_from_estimate(
    est: ChannelEstimate,
    sample_period: float,
    refine: bool = True,
    max_delay: Optional[float] = None,
) -> float:
    """
    Delay of the channel peak relative to the reference, in seconds.

    The integer lag is (argmax|h| - floor(N/2)); with refine, a 3-point
    parabola through |h| around the peak adds up to +-0.5 samples.

    Raises:
        NoPeakError: h is all zero
    """
    h = np.asarray(est.h)
    if not np.any(h):
        raise NoPeakError("channel estimate is all zero")

    peak = peak_index(h, max_lag_for(max_delay, sample_period))
    lag = float(peak - len(h) // 2)
    if refine:
        lag += parabolic_offset(np.abs(h), peak)

    delay = lag * sample_period
    if max_delay is not None:
        delay = min(max_delay, max(-max_delay, delay))
    return delay


def aggregate_jackknife(
    delays: Sequence[float], min_confidence: float
) -> Tuple[Optional[float], float, bool]:
    """
    Median delay, confidence 1/(max - min), and the acceptance decision.

    Fewer than 3 delays give an indeterminate result (None, 0, False).
    """
    if len(delays) < MIN_REPETITIONS:
        return None, 0.0, False
    values = np.asarray(delays, dtype=np.float64)
    spread = float(values.max() - values.min())
    if spread == 0.0:
        confidence = CONFIDENCE_INF
    else:
        confidence = 1.0 / spread
    return float(np.median(values)), confidence, confidence >= min_confidence


def removal_sets(rows: int, cfg: JackknifeConfig, rng: np.random.Generator) -> List[np.ndarray]:
    """Kept row indices for each repetition, drawn up front."""
    kept = []
    for _ in range(cfg.repetitions):
        removed = rng.choice(rows, size=cfg.removed, replace=False)
        kept.append(np.setdiff1d(np.arange(rows), removed))
    return kept


def jackknife_estimate(
    y: np.ndarray,
    build_operator: OperatorBuilder,
    cfg: JackknifeConfig,
    solver_cfg: SolverConfig,
    sample_period: float,
    sensor_id: int = 0,
    block_index: int = 0,
    rng: Optional[np.random.Generator] = None,
    h0: Optional[np.ndarray] = None,
    refine: bool = True,
    max_delay: Optional[float] = None,
) -> TdoaReport:
    """
    Re-solve with random measurement subsets removed and aggregate the delays.

    Args:
        y: All M measurements of one block
        build_operator: Kept row indices -> forward operator over those rows
        cfg: Repetitions, rows removed per repetition, seed, acceptance threshold
        solver_cfg: Settings for each solve
        sample_period: Seconds per sample
        rng: Source of the removal sets; default_rng(cfg.seed) when omitted
        h0: Warm start shared by every repetition
        refine: Parabolic sub-sample refinement
        max_delay: Admissible delay bound in seconds

    Returns:
        TdoaReport; repetitions that fail are dropped, fewer than 3 survivors
        give an indeterminate, rejected report
    """
    y = np.asarray(y, dtype=np.float64)
    rows = len(y)
    if rows - cfg.removed < 8:
        raise ConfigError(f"jackknife keeps {rows - cfg.removed} measurements, need at least 8")

    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    min_confidence = cfg.min_confidence or 1.0 / (2.0 * sample_period)

    delays: List[float] = []
    for j, keep in enumerate(removal_sets(rows, cfg, rng)):
        try:
            est = recover(build_operator(keep), y[keep], solver_cfg, h0=h0)
            delays.append(
                delay_from_estimate(est, sample_period, refine=refine, max_delay=max_delay)
            )
        except CstdoaError as e:
            logger.warning(
                f"Jackknife repetition {j} excluded for sensor {sensor_id} "
                f"block {block_index}: {e}"
            )

    delay, confidence, accepted = aggregate_jackknife(delays, min_confidence)
    if delay is None:
        logger.debug(
            f"Sensor {sensor_id} block {block_index}: only {len(delays)} jackknife "
            f"repetitions survived, report is indeterminate"
        )
    return TdoaReport(
        sensor_id=sensor_id,
        block_index=block_index,
        method="compressive",
        delay=delay,
        confidence=confidence,
        accepted=accepted,
        jackknife_delays=delays,
    )
