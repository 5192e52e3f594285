"""Per-block processing: measure, recover the channel, and estimate the delay both ways."""

import logging
from typing import Optional, Tuple

import numpy as np

from cstdoa.exceptions import CstdoaError, DimensionError, InadmissibleDelayError
from cstdoa.models import (
    BlockResult,
    ChannelEstimate,
    JackknifeConfig,
    SampleBlock,
    SensingConfig,
    SensorPair,
    SolverConfig,
    TdoaReport,
)
from cstdoa.services.baseline import tdoa_xcorr
from cstdoa.services.geometry import doa_from_tdoa
from cstdoa.services.msequence import apply_sensing, keep_rows
from cstdoa.services.solver import recover
from cstdoa.services.sparsity import SparsityBasis, forward_operator
from cstdoa.services.tdoa import jackknife_estimate

logger = logging.getLogger(__name__)


class BlockProcessor:
    """
    Turns a (reference block, sensor block) pair into delay reports.

    The sensor block is compressed with its own m-sequence matrix, the
    channel is recovered against the reference window, and the jackknife
    gives the delay with its confidence. The full-rate cross-correlation of
    the same two blocks runs alongside as the comparison method.
    """

    def __init__(
        self,
        sensing: SensingConfig,
        solver: SolverConfig,
        jackknife: JackknifeConfig,
        sample_rate: float,
        speed_of_sound: float = 343.0,
        max_delay: Optional[float] = None,
        refine: bool = True,
        seed: int = 0,
    ):
        self.sensing = sensing
        self.solver = solver
        self.jackknife = jackknife
        self.sample_period = 1.0 / sample_rate
        self.speed_of_sound = speed_of_sound
        self.max_delay = max_delay
        self.refine = refine
        self.seed = seed

    def _rng(self, sensor: int, block: int) -> np.random.Generator:
        seq = np.random.SeedSequence([self.jackknife.seed, self.seed, sensor, block])
        return np.random.default_rng(seq)

    def _theta(self, report: TdoaReport, pair: Optional[SensorPair]) -> TdoaReport:
        if pair is None or not report.accepted or report.delay is None:
            return report
        try:
            theta = doa_from_tdoa(report.delay, pair.spacing, self.speed_of_sound)
        except InadmissibleDelayError as e:
            logger.warning(
                f"Sensor {report.sensor_id} block {report.block_index} ({report.method}) "
                f"rejected: {e}"
            )
            return report.model_copy(update={"accepted": False})
        return report.model_copy(update={"theta": theta})

    def compressive(
        self,
        reference: SampleBlock,
        block: SampleBlock,
        h0: Optional[np.ndarray] = None,
    ) -> Tuple[TdoaReport, Optional[ChannelEstimate]]:
        """Compressive path only: one full solve plus the jackknife."""
        if reference.extended is None:
            raise DimensionError("reference block carries no extended window")

        matrix = self.sensing.matrix_for(block.sensor_id)
        y = apply_sensing(matrix, block.samples)
        basis = SparsityBasis(reference.extended, reference.length)

        estimate = None
        try:
            estimate = recover(forward_operator(matrix, basis), y, self.solver, h0=h0)
        except CstdoaError as e:
            logger.warning(
                f"Full solve failed for sensor {block.sensor_id} block {block.block_index}: {e}"
            )

        report = jackknife_estimate(
            y,
            lambda keep: forward_operator(keep_rows(matrix, keep), basis),
            self.jackknife,
            self.solver,
            self.sample_period,
            sensor_id=block.sensor_id,
            block_index=block.block_index,
            rng=self._rng(block.sensor_id, block.block_index),
            h0=estimate.h if estimate is not None else h0,
            refine=self.refine,
            max_delay=self.max_delay,
        )
        return report.model_copy(update={"start_time": block.start_time}), estimate

    def cross_correlation(self, reference: SampleBlock, block: SampleBlock) -> TdoaReport:
        """Full-rate baseline on the same pair of blocks."""
        try:
            report = tdoa_xcorr(
                reference.samples,
                block.samples,
                self.sample_period,
                max_delay=self.max_delay,
                sensor_id=block.sensor_id,
                block_index=block.block_index,
                refine=self.refine,
            )
        except CstdoaError as e:
            logger.debug(
                f"Cross-correlation found no peak for sensor {block.sensor_id} "
                f"block {block.block_index}: {e}"
            )
            report = TdoaReport(
                sensor_id=block.sensor_id,
                block_index=block.block_index,
                method="xcorr",
                accepted=False,
            )
        return report.model_copy(update={"start_time": block.start_time})

    def process(
        self,
        reference: SampleBlock,
        block: SampleBlock,
        pair: Optional[SensorPair] = None,
        h0: Optional[np.ndarray] = None,
    ) -> BlockResult:
        """
        Both delay estimates for one sensor block.

        Args:
            reference: Reference sensor block with its extended window
            block: Non-reference sensor block at the same index
            pair: Geometry of the (reference, sensor) baseline, for DOA
            h0: Warm start from the previous block of this sensor

        Returns:
            BlockResult; h holds the full-measurement solution (or the warm
            start it was given when that solve failed)
        """
        compressive, estimate = self.compressive(reference, block, h0=h0)
        xcorr = self.cross_correlation(reference, block)
        compressive = self._theta(compressive, pair)
        xcorr = self._theta(xcorr, pair)

        if not compressive.accepted:
            logger.debug(
                f"Sensor {block.sensor_id} block {block.block_index} rejected "
                f"(confidence {compressive.confidence})"
            )

        diagnostics = {}
        if estimate is not None:
            diagnostics = estimate.model_dump(
                include={"iterations", "objective", "residual", "peak_index", "peak_magnitude", "mu"}
            )
        return BlockResult(
            sensor_id=block.sensor_id,
            block_index=block.block_index,
            start_time=block.start_time,
            compressive=compressive,
            xcorr=xcorr,
            h=estimate.h if estimate is not None else h0,
            **diagnostics,
        )
