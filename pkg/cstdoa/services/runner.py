"""End-to-end runs: simulated scenarios and recorded two-microphone pairs."""

import asyncio
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, List, Optional, Sequence, Tuple, TypeVar

import numpy as np

from cstdoa.config import settings
from cstdoa.exceptions import ConfigError, UnsupportedTrajectoryError
from cstdoa.models import (
    ArrayGeometry,
    BlockResult,
    FigurePoint,
    RunConfig,
    RunResult,
    SampleBlock,
    Scenario,
    TrackPoint,
)
from cstdoa.services.audio import audio_blocks, load_audio
from cstdoa.services.geometry import analytic_tdoa, triangulate
from cstdoa.services.pipeline import BlockProcessor
from cstdoa.services.sigsim import make_block, prepare_sampling

logger = logging.getLogger(__name__)

T = TypeVar("T")

# Loop detection on the delay trace, as fractions of its largest excursion
LEAVE_FRACTION = 0.5
RETURN_FRACTION = 0.2


def loop_period(times: Sequence[float], points: np.ndarray) -> Optional[float]:
    """
    Time for a 2-D trace to come back to its first point after leaving it.

    The trace has left once it is farther than half its largest excursion
    from the start; the return is the closest approach within the first
    later run of points near the start again.
    """
    points = np.asarray(points, dtype=np.float64)
    if len(points) < 3:
        return None
    distance = np.hypot(*(points - points[0]).T)
    scale = distance.max()
    if scale == 0.0:
        return None

    left = np.flatnonzero(distance > LEAVE_FRACTION * scale)
    if not left.size:
        return None
    near = distance < RETURN_FRACTION * scale
    candidates = np.flatnonzero(near[left[0] :]) + left[0]
    if not candidates.size:
        return None

    start = end = int(candidates[0])
    while end + 1 < len(distance) and near[end + 1]:
        end += 1
    best = start + int(np.argmin(distance[start : end + 1]))
    return float(times[best] - times[0])


class ScenarioRunner:
    """Runs one RunConfig through the block pipeline on a thread pool."""

    def __init__(self, cfg: RunConfig, workers: Optional[int] = None):
        self.cfg = cfg
        self.workers = workers or cfg.workers or settings.WORKERS

    async def _gather(self, jobs: List[Callable[[], T]]) -> List[T]:
        # gather keeps submission order, so results do not depend on scheduling
        loop = asyncio.get_running_loop()
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            return await asyncio.gather(*(loop.run_in_executor(pool, job) for job in jobs))

    def _processor(self, sample_rate: float, speed_of_sound: float, max_delay: Optional[float]):
        cfg = self.cfg
        return BlockProcessor(
            sensing=cfg.sensing,
            solver=cfg.solver,
            jackknife=cfg.jackknife,
            sample_rate=sample_rate,
            speed_of_sound=speed_of_sound,
            max_delay=max_delay if cfg.geometry.restrict_lags else None,
            refine=cfg.refine,
            seed=cfg.seed,
        )

    async def _process(
        self,
        processor: BlockProcessor,
        blocks: List[List[SampleBlock]],
        geometry: ArrayGeometry,
    ) -> List[BlockResult]:
        """Process every non-reference sensor block; result order is (block, sensor)."""
        n_sensors = len(geometry.positions)
        pairs = {i: geometry.pair(i) for i in range(1, n_sensors)}

        if self.cfg.solver.warm_start:

            def chain(sensor: int) -> List[BlockResult]:
                h0 = None
                out = []
                for row in blocks:
                    result = processor.process(row[0], row[sensor], pairs[sensor], h0=h0)
                    h0 = result.h
                    out.append(result)
                return out

            chains = await self._gather([lambda i=i: chain(i) for i in range(1, n_sensors)])
            return [chains[i - 1][b] for b in range(len(blocks)) for i in range(1, n_sensors)]

        jobs = [
            (lambda row=row, i=i: processor.process(row[0], row[i], pairs[i]))
            for row in blocks
            for i in range(1, n_sensors)
        ]
        return await self._gather(jobs)

    def _track(self, results: List[BlockResult], geometry: ArrayGeometry) -> List[TrackPoint]:
        by_block: Dict[int, List[BlockResult]] = {}
        for r in results:
            by_block.setdefault(r.block_index, []).append(r)

        track = []
        for block, rows in sorted(by_block.items()):
            pairs = [
                (geometry.pair(r.sensor_id), r.compressive.theta)
                for r in rows
                if r.compressive.accepted and r.compressive.theta is not None
            ]
            if len(pairs) < 2:
                continue
            fix = triangulate(pairs, source_side=self.cfg.geometry.source_side)
            track.append(
                TrackPoint(
                    time=rows[0].start_time,
                    position=fix.position,
                    residual=fix.residual,
                    n_pairs_used=fix.n_pairs_used,
                    degenerate=fix.degenerate,
                )
            )
        return track

    def _figure(
        self, scn: Scenario, results: List[BlockResult]
    ) -> Tuple[List[FigurePoint], Optional[float], Optional[float]]:
        """(delta_t_1, delta_t_2) trace at block mid-times, estimated and analytic."""
        if len(scn.sensors) < 3:
            return [], None, None

        half_block = scn.block_duration / 2
        estimated: Dict[int, Dict[int, Optional[float]]] = {}
        for r in results:
            if r.sensor_id in (1, 2):
                report = r.compressive
                delay = report.delay if report.accepted else None
                estimated.setdefault(r.block_index, {})[r.sensor_id] = delay

        figure = []
        for block in sorted(estimated):
            t = block * scn.block_duration + half_block
            try:
                analytic = (
                    float(analytic_tdoa(scn, 1, t)),
                    float(analytic_tdoa(scn, 2, t)),
                )
            except UnsupportedTrajectoryError:
                analytic = (None, None)
            figure.append(
                FigurePoint(
                    time=t,
                    estimated=(estimated[block].get(1), estimated[block].get(2)),
                    analytic=analytic,
                )
            )

        complete = [p for p in figure if None not in p.estimated]
        est_period = loop_period([p.time for p in complete], [p.estimated for p in complete])
        exact = [p for p in figure if None not in p.analytic]
        ana_period = loop_period([p.time for p in exact], [p.analytic for p in exact])
        return figure, est_period, ana_period

    async def run_scenario(self) -> RunResult:
        """
        Simulate the configured scenario and estimate every sensor's delay per block.

        Raises:
            ConfigError: the run is not in simulate mode
            TruncationError: a file-backed source is shorter than the scenario
        """
        cfg = self.cfg
        if cfg.scenario is None:
            raise ConfigError("run_scenario needs a [scenario] table")
        scn = cfg.scenario.model_copy(update={"seed": cfg.seed})
        geometry = ArrayGeometry(positions=scn.sensors, speed_of_sound=scn.speed_of_sound)

        partial = prepare_sampling(scn)
        logger.info(
            f"Simulating {scn.n_blocks} blocks x {len(scn.sensors)} sensors "
            f"(N={scn.block_length}, M={cfg.sensing.rows}, workers={self.workers})"
        )

        flat = await self._gather(
            [
                (lambda b=b, i=i: make_block(scn, i, b))
                for b in range(scn.n_blocks)
                for i in range(len(scn.sensors))
            ]
        )
        n_sensors = len(scn.sensors)
        blocks = [flat[b * n_sensors : (b + 1) * n_sensors] for b in range(scn.n_blocks)]

        processor = self._processor(scn.sample_rate, scn.speed_of_sound, geometry.max_delay)
        results = await self._process(processor, blocks, geometry)

        track = self._track(results, geometry) if n_sensors >= 3 else []
        figure, est_period, ana_period = self._figure(scn, results)

        accepted = sum(r.compressive.accepted for r in results)
        logger.info(f"Processed {len(results)} sensor blocks, {accepted} accepted")
        return RunResult(
            results=results,
            track=track,
            figure=figure,
            sample_rate=scn.sample_rate,
            n_blocks=scn.n_blocks,
            dropped_partial_blocks=1 if partial else 0,
            loop_period_estimated=est_period,
            loop_period_analytic=ana_period,
        )

    async def run_audio_pair(self) -> RunResult:
        """
        Estimate the delay between two recorded channels block by block.

        Raises:
            ConfigError: sample rates differ or the block length does not fit
            AudioFormatError: an input is not 16-bit PCM
        """
        cfg = self.cfg
        if cfg.audio is None:
            raise ConfigError("run_audio_pair needs an [audio] table")
        ref_rate, reference = load_audio(cfg.audio.reference)
        sen_rate, sensor = load_audio(cfg.audio.sensor)
        if ref_rate != sen_rate:
            raise ConfigError(f"sample rates differ: {ref_rate:g} Hz vs {sen_rate:g} Hz")

        n = cfg.block_length
        pairs, dropped = audio_blocks(reference, sensor, n, ref_rate)
        if dropped:
            logger.warning("Dropping trailing partial block")
        logger.info(
            f"Audio pair: {len(pairs)} blocks of {n} samples "
            f"({n / ref_rate * 1000:.1f} ms) at {ref_rate:g} Hz"
        )

        geometry = ArrayGeometry(
            positions=[(0.0, 0.0), (cfg.audio.spacing, 0.0)],
            speed_of_sound=cfg.audio.speed_of_sound,
        )
        processor = self._processor(ref_rate, cfg.audio.speed_of_sound, geometry.max_delay)
        results = await self._process(processor, [list(p) for p in pairs], geometry)

        accepted = sum(r.compressive.accepted for r in results)
        logger.info(f"Processed {len(results)} blocks, {accepted} accepted")
        return RunResult(
            results=results,
            sample_rate=ref_rate,
            n_blocks=len(pairs),
            dropped_partial_blocks=dropped,
        )

    async def run(self) -> RunResult:
        if self.cfg.mode == "simulate":
            return await self.run_scenario()
        return await self.run_audio_pair()


async def run_scenario(cfg: RunConfig, workers: Optional[int] = None) -> RunResult:
    """Simulated run of cfg."""
    return await ScenarioRunner(cfg, workers).run_scenario()


async def run_audio_pair(cfg: RunConfig, workers: Optional[int] = None) -> RunResult:
    """Two-microphone run of cfg."""
    return await ScenarioRunner(cfg, workers).run_audio_pair()
