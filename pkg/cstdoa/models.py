"""Pydantic models for data validation and serialization."""

import math
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

Point = Tuple[float, float]

# Degrees covered by the built-in primitive polynomial table
MIN_DEGREE = 2
MAX_DEGREE = 16


def length_for_degree(degree: int) -> int:
    """Sequence period / block length for an LFSR of the given degree."""
    return 2**degree - 1


def degree_for_length(length: int) -> Optional[int]:
    """Inverse of length_for_degree, or None when length is not 2^k - 1."""
    degree = (length + 1).bit_length() - 1
    if MIN_DEGREE <= degree <= MAX_DEGREE and length_for_degree(degree) == length:
        return degree
    return None


class MSequenceSpec(BaseModel):
    """LFSR definition of a maximum-length sequence."""

    model_config = ConfigDict(frozen=True)

    degree: int
    # Exponents of the feedback polynomial terms except the constant one,
    # e.g. x^3 + x + 1 -> (3, 1). Empty selects the built-in table entry.
    taps: Tuple[int, ...] = ()
    seed: int = 1

    @property
    def length(self) -> int:
        return length_for_degree(self.degree)


class SensingMatrixSpec(BaseModel):
    """M x N +-1 matrix whose rows are shifted copies of one m-sequence period."""

    model_config = ConfigDict(frozen=True)

    mseq: MSequenceSpec
    rows: int
    row_shift_offsets: Optional[Tuple[int, ...]] = None  # None -> i * floor(N/M)
    base_shift: int = 0  # per-sensor offset added to every row shift

    @property
    def length(self) -> int:
        return self.mseq.length


class SourceSignal(BaseModel):
    """Sound emitted by the source."""

    kind: Literal["gaussian-sine", "noise-burst", "pcm", "silence"] = "gaussian-sine"

    # gaussian-sine: exp(-0.5 ((t - center) / width)^2) * sin(2 pi f0 t)
    envelope_width: float = Field(10.0, gt=0)
    envelope_center: float = 0.0
    carrier_hz: float = Field(1000.0, gt=0)

    # noise-burst: random-phase multitone confined to band_hz, gated into bursts
    band_hz: Tuple[float, float] = (300.0, 3400.0)
    components: int = Field(128, ge=1)
    burst_length: float = Field(0.0, ge=0)  # 0 -> continuous
    burst_gap: float = Field(0.0, ge=0)
    seed: int = 0

    # pcm: file-backed source
    file: Optional[Path] = None
    file_format: Literal["wav", "raw"] = "wav"
    file_rate: Optional[float] = None  # required for raw files
    channel: int = 0

    onset: float = Field(0.0, ge=0)  # seconds of leading silence

    @model_validator(mode="after")
    def _check_kind(self) -> "SourceSignal":
        if self.kind == "pcm" and self.file is None:
            raise ValueError("pcm source requires 'file'")
        if self.kind == "pcm" and self.file_format == "raw" and not self.file_rate:
            raise ValueError("raw pcm source requires 'file_rate'")
        low, high = self.band_hz
        if not 0 < low < high:
            raise ValueError("band_hz must satisfy 0 < low < high")
        return self


class Trajectory(BaseModel):
    """Source motion in the sensor plane."""

    kind: Literal["circle", "static", "path"] = "circle"

    # circle: centre on the y-axis at center_offset, counter-clockwise at speed
    center_offset: float = 7.0
    radius: float = Field(5.0, gt=0)
    speed: float = Field(0.47, ge=0)
    start_angle: float = 0.0

    # static
    position: Point = (0.0, 7.0)

    # path: CSV file with t,x,y rows, linearly interpolated
    file: Optional[Path] = None

    @model_validator(mode="after")
    def _check_kind(self) -> "Trajectory":
        if self.kind == "path" and self.file is None:
            raise ValueError("path trajectory requires 'file'")
        return self

    @property
    def loop_time(self) -> Optional[float]:
        """Seconds per revolution of a circle trajectory."""
        if self.kind != "circle" or self.speed == 0:
            return None
        return 2 * math.pi * self.radius / self.speed


class EchoPath(BaseModel):
    """Tapped echo: delayed, scaled copy of the direct path."""

    delay: float = Field(ge=0)
    gain: float


class Scenario(BaseModel):
    """Simulated world: sensors, source, propagation and sampling."""

    sensors: List[Point]  # index 0 is the full-rate reference sensor
    source: SourceSignal = Field(default_factory=SourceSignal)
    trajectory: Trajectory = Field(default_factory=Trajectory)
    sample_rate: float = Field(16000.0, gt=0)
    block_length: int = 4095
    duration: float = Field(gt=0)
    speed_of_sound: float = Field(343.0, gt=0)
    snr_db: Optional[Union[float, List[float]]] = None  # None -> noiseless
    echoes: List[EchoPath] = Field(default_factory=list)
    attenuation: Literal["none", "inverse-distance"] = "none"
    noise_floor: float = Field(1e-3, ge=0)
    seed: int = 0

    @field_validator("sensors")
    @classmethod
    def _at_least_two_sensors(cls, v: List[Point]) -> List[Point]:
        if len(v) < 2:
            raise ValueError("at least 2 sensors are required")
        return v

    @field_validator("block_length")
    @classmethod
    def _supported_length(cls, v: int) -> int:
        if degree_for_length(v) is None:
            raise ValueError(
                f"block_length must be 2^k - 1 for k in {MIN_DEGREE}..{MAX_DEGREE}"
            )
        return v

    @model_validator(mode="after")
    def _check_consistency(self) -> "Scenario":
        nyquist = self.sample_rate / 2
        if self.source.kind == "gaussian-sine" and self.source.carrier_hz >= nyquist:
            raise ValueError(
                f"carrier {self.source.carrier_hz} Hz must be below f_s/2 = {nyquist} Hz"
            )
        if self.source.kind == "noise-burst" and self.source.band_hz[1] >= nyquist:
            raise ValueError(f"band upper edge must be below f_s/2 = {nyquist} Hz")
        if isinstance(self.snr_db, list) and len(self.snr_db) != len(self.sensors):
            raise ValueError("snr_db list needs one entry per sensor")
        return self

    @property
    def sample_period(self) -> float:
        return 1.0 / self.sample_rate

    @property
    def block_duration(self) -> float:
        return self.block_length / self.sample_rate

    @property
    def total_samples(self) -> int:
        return int(math.floor(self.duration * self.sample_rate))

    @property
    def n_blocks(self) -> int:
        return self.total_samples // self.block_length

    def snr_for(self, sensor: int) -> Optional[float]:
        if isinstance(self.snr_db, list):
            return self.snr_db[sensor]
        return self.snr_db


class SampleBlock(BaseModel):
    """A length-N window of full-rate samples from one sensor."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    sensor_id: int
    block_index: int
    start_time: float
    samples: np.ndarray
    # Reference sensor only: 2N+1 samples, extended[k] is the sample at
    # block-relative index k - floor(N/2)
    extended: Optional[np.ndarray] = None

    @model_validator(mode="after")
    def _check_samples(self) -> "SampleBlock":
        if self.samples.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("samples must be finite")
        if self.extended is not None:
            if self.extended.shape != (2 * len(self.samples) + 1,):
                raise ValueError("extended window must hold 2N+1 samples")
            if not np.all(np.isfinite(self.extended)):
                raise ValueError("extended window must be finite")
        return self

    @property
    def length(self) -> int:
        return len(self.samples)


class SolverConfig(BaseModel):
    """Settings for the l1-regularized channel recovery."""

    mu: Optional[float] = Field(None, gt=0)  # None -> default_mu heuristic
    mode: Literal["lasso", "equality"] = "lasso"
    max_iterations: int = Field(5000, gt=0)
    rel_tolerance: float = Field(1e-6, gt=0)
    backtracking: bool = False
    warm_start: bool = True
    # Solve over unit-norm columns of A (weighted l1), mapping h back afterwards
    normalize_columns: bool = True
    norm_iterations: int = Field(30, gt=0)
    norm_tolerance: float = Field(1e-4, gt=0)


class ChannelEstimate(BaseModel):
    """Recovered sparse channel response for one sensor and block."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    h: np.ndarray
    iterations: int
    objective: float
    residual: float
    peak_index: int
    peak_magnitude: float
    mu: float
    objective_trace: List[float] = Field(default_factory=list)


class JackknifeConfig(BaseModel):
    """Repeated solves with random measurement subsets removed."""

    repetitions: int = Field(8, ge=3)
    removed: int = Field(4, ge=1)
    seed: int = 0
    min_confidence: Optional[float] = Field(None, gt=0)  # None -> 1 / (2T)


class TdoaReport(BaseModel):
    """Per-block, per-sensor delay estimate relative to the reference sensor."""

    sensor_id: int
    block_index: int
    method: Literal["compressive", "xcorr"] = "compressive"
    start_time: float = 0.0
    delay: Optional[float] = None  # seconds, None when indeterminate
    confidence: Optional[float] = None  # None -> not applicable; math.inf sentinel
    accepted: bool = False
    jackknife_delays: List[float] = Field(default_factory=list)
    theta: Optional[float] = None  # DOA radians for the (reference, sensor) pair


class BlockResult(BaseModel):
    """Both delay estimates for one sensor and block, plus solver diagnostics."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    sensor_id: int
    block_index: int
    start_time: float
    compressive: TdoaReport
    xcorr: TdoaReport
    iterations: int = 0
    objective: Optional[float] = None
    residual: Optional[float] = None
    peak_index: Optional[int] = None
    peak_magnitude: Optional[float] = None
    mu: Optional[float] = None
    # Full-measurement solution, carried to the next block as a warm start
    h: Optional[np.ndarray] = Field(None, exclude=True)


class ArrayGeometry(BaseModel):
    """Sensor positions with the reference at index 0."""

    positions: List[Point]
    speed_of_sound: float = Field(343.0, gt=0)

    @field_validator("positions")
    @classmethod
    def _distinct_positions(cls, v: List[Point]) -> List[Point]:
        if len(v) < 2:
            raise ValueError("at least 2 sensors are required")
        for i in range(len(v)):
            for j in range(i + 1, len(v)):
                if math.dist(v[i], v[j]) <= 0:
                    raise ValueError(f"sensors {i} and {j} coincide")
        return v

    @property
    def d_max(self) -> float:
        return max(
            math.dist(a, b)
            for i, a in enumerate(self.positions)
            for b in self.positions[i + 1 :]
        )

    @property
    def max_delay(self) -> float:
        return self.d_max / self.speed_of_sound

    def pair(self, sensor: int) -> "SensorPair":
        return SensorPair(reference=self.positions[0], sensor=self.positions[sensor])


class SensorPair(BaseModel):
    """Reference sensor and one other sensor forming a baseline."""

    reference: Point
    sensor: Point

    @property
    def spacing(self) -> float:
        return math.dist(self.reference, self.sensor)

    @property
    def midpoint(self) -> Point:
        return (
            (self.reference[0] + self.sensor[0]) / 2,
            (self.reference[1] + self.sensor[1]) / 2,
        )


class TriangulationResult(BaseModel):
    """Least-squares crossing of bearing lines."""

    position: Optional[Point] = None  # None -> bearing-only
    residual: Optional[float] = None
    bearings: List[float] = Field(default_factory=list)  # world-frame angles, radians
    n_pairs_used: int = 0
    degenerate: bool = False


# ==================== Run configuration ====================


class SensingConfig(BaseModel):
    """Compressive measurement settings shared by the non-reference sensors."""

    degree: int = Field(12, ge=MIN_DEGREE, le=MAX_DEGREE)
    rows: int = Field(40, gt=0)
    taps: Optional[List[int]] = None
    mseq_seed: int = 1
    row_shifts: Optional[List[int]] = None
    sensor_base_shifts: Optional[List[int]] = None  # one per sensor, index 0 unused

    @property
    def block_length(self) -> int:
        return length_for_degree(self.degree)

    @model_validator(mode="after")
    def _check_rows(self) -> "SensingConfig":
        if self.rows >= self.block_length:
            raise ValueError(f"rows must be below N = {self.block_length}")
        if self.row_shifts is not None and len(self.row_shifts) != self.rows:
            raise ValueError("row_shifts needs exactly 'rows' entries")
        return self

    def matrix_for(self, sensor: int) -> SensingMatrixSpec:
        base = 0
        if self.sensor_base_shifts is not None and sensor < len(self.sensor_base_shifts):
            base = self.sensor_base_shifts[sensor]
        return SensingMatrixSpec(
            mseq=MSequenceSpec(
                degree=self.degree,
                taps=tuple(self.taps or ()),
                seed=self.mseq_seed,
            ),
            rows=self.rows,
            row_shift_offsets=tuple(self.row_shifts) if self.row_shifts else None,
            base_shift=base,
        )


class GeometryConfig(BaseModel):
    """How delays are bounded and turned into bearings."""

    source_side: Literal[1, -1] = 1  # +1: half-plane toward +y of each baseline, -1: toward -y
    restrict_lags: bool = True


class AudioInput(BaseModel):
    """One recorded channel."""

    path: Path
    format: Literal["wav", "raw"] = "wav"
    channel: int = Field(0, ge=0)
    sample_rate: Optional[float] = Field(None, gt=0)  # required for raw


class AudioPairConfig(BaseModel):
    """Two-microphone recording: reference at full rate, sensor compressed."""

    reference: AudioInput
    sensor: AudioInput
    spacing: float = Field(0.11, gt=0)
    speed_of_sound: float = Field(343.0, gt=0)


class RunConfig(BaseModel):
    """Everything that determines a run's numbers."""

    name: str = "run"
    mode: Literal["simulate", "audio-pair"] = "simulate"
    seed: int = Field(0, ge=0)
    output_dir: Optional[Path] = None
    workers: Optional[int] = Field(None, ge=1)
    refine: bool = True  # parabolic sub-sample refinement of delays
    scenario: Optional[Scenario] = None
    audio: Optional[AudioPairConfig] = None
    sensing: SensingConfig = Field(default_factory=SensingConfig)
    solver: SolverConfig = Field(default_factory=SolverConfig)
    jackknife: JackknifeConfig = Field(default_factory=JackknifeConfig)
    geometry: GeometryConfig = Field(default_factory=GeometryConfig)

    @model_validator(mode="after")
    def _check_mode(self) -> "RunConfig":
        n = self.sensing.block_length
        if self.mode == "simulate":
            if self.scenario is None:
                raise ValueError("simulate mode requires a [scenario] table")
            if self.scenario.block_length != n:
                raise ValueError(
                    f"scenario.block_length {self.scenario.block_length} does not match "
                    f"2^sensing.degree - 1 = {n}"
                )
        else:
            if self.audio is None:
                raise ValueError("audio-pair mode requires an [audio] table")
            for inp in (self.audio.reference, self.audio.sensor):
                if not inp.path.exists():
                    raise ValueError(f"audio file not found: {inp.path}")
                if inp.format == "raw" and inp.sample_rate is None:
                    raise ValueError(f"raw input {inp.path} needs sample_rate")
        if self.sensing.rows - self.jackknife.removed < 8:
            raise ValueError("jackknife must keep at least 8 measurements per solve")
        return self

    @property
    def block_length(self) -> int:
        return self.sensing.block_length

    @property
    def compression_ratio(self) -> float:
        return self.block_length / self.sensing.rows


class RunManifest(BaseModel):
    """Run echo written next to the CSV outputs."""

    name: str
    mode: str
    seed: int
    versions: Dict[str, str]
    config: dict
    block_length: int
    rows: int
    compression_ratio: float
    sample_rate: Optional[float] = None
    n_blocks: int = 0
    dropped_partial_blocks: int = 0
    accepted_reports: int = 0
    rejected_reports: int = 0
    loop_period_estimated: Optional[float] = None
    loop_period_analytic: Optional[float] = None
    dry_run: bool = False
    files: List[str] = Field(default_factory=list)


# ==================== Run results ====================


class TrackPoint(BaseModel):
    """Triangulated source position for one block."""

    time: float
    position: Optional[Point] = None
    residual: Optional[float] = None
    n_pairs_used: int = 0
    degenerate: bool = False


class FigurePoint(BaseModel):
    """One point of the (delta_t_1, delta_t_2) trace over time."""

    time: float
    estimated: Tuple[Optional[float], Optional[float]] = (None, None)
    analytic: Tuple[Optional[float], Optional[float]] = (None, None)


class RunResult(BaseModel):
    """Everything a run computed, in block order."""

    results: List[BlockResult] = Field(default_factory=list)
    track: List[TrackPoint] = Field(default_factory=list)
    figure: List[FigurePoint] = Field(default_factory=list)
    sample_rate: float
    n_blocks: int = 0
    dropped_partial_blocks: int = 0
    loop_period_estimated: Optional[float] = None
    loop_period_analytic: Optional[float] = None

    def reports(self, method: Optional[str] = None) -> List[TdoaReport]:
        out = []
        for r in self.results:
            if method in (None, "compressive"):
                out.append(r.compressive)
            if method in (None, "xcorr"):
                out.append(r.xcorr)
        return out
