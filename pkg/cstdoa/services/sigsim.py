"""Source synthesis, propagation to the sensors, and block sampling."""

import logging
import math
from functools import lru_cache
from pathlib import Path
from typing import Iterator, List, Tuple

import numpy as np
from scipy.signal import windows

from cstdoa.exceptions import ConfigError, TruncationError
from cstdoa.models import SampleBlock, Scenario, SourceSignal, Trajectory
from cstdoa.services.audio import load_channel

logger = logging.getLogger(__name__)

# Windowed-sinc fractional delay
SINC_TAPS = 64
SINC_HALF = SINC_TAPS // 2

# Taper table samples per unit of tap distance
TAPER_OVERSAMPLE = 1024

# Fixed-point iterations for the retarded emission time (v << c)
RETARDED_ITERATIONS = 5

# Inverse-distance attenuation is clamped below this range (meters)
MIN_DISTANCE = 0.1

BURST_EDGE = 0.01  # seconds of raised-cosine ramp at burst edges


# ==================== Fractional delay ====================


@lru_cache(maxsize=1)
def _taper_table() -> np.ndarray:
    # Hann over [-(SINC_HALF + 1), SINC_HALF + 1], zero at both ends
    return windows.hann(2 * TAPER_OVERSAMPLE * (SINC_HALF + 1) + 1, sym=True)


def _hann(u: np.ndarray) -> np.ndarray:
    table = _taper_table()
    return np.interp((u + SINC_HALF + 1) * TAPER_OVERSAMPLE, np.arange(len(table)), table)


def sinc_interpolate(samples: np.ndarray, positions: np.ndarray, origin: int = 0) -> np.ndarray:
    """
    Band-limited read of samples at fractional indices.

    samples[i] sits at index origin + i. Uses a 64-tap Hann-windowed sinc;
    samples outside the array count as zero and exact integer positions
    return the stored sample.
    """
    samples = np.asarray(samples, dtype=np.float64)
    positions = np.asarray(positions, dtype=np.float64)

    floor = np.floor(positions)
    frac = positions - floor
    base = floor.astype(np.int64) - origin
    offsets = np.arange(-SINC_HALF + 1, SINC_HALF + 1)

    padded = np.concatenate([np.zeros(SINC_TAPS), samples, np.zeros(SINC_TAPS)])
    idx = np.clip(base[:, None] + offsets[None, :] + SINC_TAPS, 0, len(padded) - 1)
    dist = frac[:, None] - offsets[None, :]
    weights = np.sinc(dist) * _hann(dist)
    out = np.sum(weights * padded[idx], axis=1)

    exact = frac == 0.0
    if np.any(exact):
        out[exact] = padded[np.clip(base[exact] + SINC_TAPS, 0, len(padded) - 1)]
    return out


def fractional_delay(x: np.ndarray, delay_samples: float) -> np.ndarray:
    """y[n] = x(n - delay) by windowed-sinc interpolation, same length as x."""
    n = np.arange(len(x), dtype=np.float64)
    return sinc_interpolate(x, n - delay_samples)


# ==================== Sources ====================


@lru_cache(maxsize=32)
def _multitone(seed: int, components: int, low: float, high: float) -> Tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(0x5EED,)))
    freqs = rng.uniform(low, high, size=components)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=components)
    return freqs, phases


def _burst_gate(sig: SourceSignal, t: np.ndarray) -> np.ndarray:
    if sig.burst_length <= 0:
        return np.ones_like(t)
    period = sig.burst_length + sig.burst_gap
    phase = np.mod(t - sig.onset, period)
    edge = min(BURST_EDGE, sig.burst_length / 4)
    ramp = np.clip(np.minimum(phase, sig.burst_length - phase) / edge, 0.0, 1.0)
    return np.where(phase < sig.burst_length, 0.5 * (1.0 - np.cos(np.pi * ramp)), 0.0)


def synth_source(sig: SourceSignal, t) -> np.ndarray:
    """
    Source amplitude at emission times t (seconds).

    gaussian-sine: exp(-0.5 ((t - t_c) / tau)^2) * sin(2 pi f0 t)
    noise-burst: unit-power random-phase multitone in band_hz, gated
    pcm: file samples read at t by windowed-sinc interpolation
    silence: zero
    """
    t = np.asarray(t, dtype=np.float64)

    if sig.kind == "gaussian-sine":
        envelope = np.exp(-0.5 * ((t - sig.envelope_center) / sig.envelope_width) ** 2)
        out = envelope * np.sin(2.0 * np.pi * sig.carrier_hz * t)
    elif sig.kind == "noise-burst":
        freqs, phases = _multitone(sig.seed, sig.components, *sig.band_hz)
        out = np.zeros_like(t)
        for f, p in zip(freqs, phases):
            out += np.sin(2.0 * np.pi * f * t + p)
        out *= math.sqrt(2.0 / sig.components) * _burst_gate(sig, t)
    elif sig.kind == "pcm":
        rate, samples = load_channel(Path(sig.file), sig.file_format, sig.channel, sig.file_rate)
        out = sinc_interpolate(samples, t * rate) if t.size else np.zeros_like(t)
    else:
        out = np.zeros_like(t)

    if sig.onset > 0:
        out = np.where(t < sig.onset, 0.0, out)
    return out


def _source_on_grid(sig: SourceSignal, emission: np.ndarray, sample_rate: float) -> np.ndarray:
    # Analytic sources are rendered on the f_s grid and read back with the
    # windowed sinc so every source goes through the same fractional delay.
    if sig.kind in ("pcm", "silence") or emission.size == 0:
        return synth_source(sig, emission)
    positions = emission * sample_rate
    k0 = int(np.floor(positions.min())) - SINC_TAPS
    k1 = int(np.ceil(positions.max())) + SINC_TAPS
    grid = synth_source(sig, np.arange(k0, k1 + 1) / sample_rate)
    return sinc_interpolate(grid, positions, origin=k0)


def check_source_duration(scn: Scenario) -> None:
    """Raise TruncationError when a file-backed source is too short."""
    sig = scn.source
    if sig.kind != "pcm":
        return
    rate, samples = load_channel(Path(sig.file), sig.file_format, sig.channel, sig.file_rate)
    available = len(samples) / rate
    if available < scn.duration:
        raise TruncationError(
            f"{sig.file} holds {available:.3f} s, scenario needs {scn.duration:.3f} s"
        )


# ==================== Geometry of motion ====================


@lru_cache(maxsize=8)
def _load_path(path: Path) -> np.ndarray:
    table = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    if table.shape[1] < 3:
        raise ConfigError(f"{path}: expected t,x,y columns")
    return table[np.argsort(table[:, 0])]


def source_position(traj: Trajectory, t) -> Tuple[np.ndarray, np.ndarray]:
    """Source (x, y) at times t."""
    t = np.asarray(t, dtype=np.float64)
    if traj.kind == "circle":
        angle = traj.start_angle + (traj.speed / traj.radius) * t
        return traj.radius * np.cos(angle), traj.center_offset + traj.radius * np.sin(angle)
    if traj.kind == "static":
        return np.full_like(t, traj.position[0]), np.full_like(t, traj.position[1])
    table = _load_path(Path(traj.file))
    return np.interp(t, table[:, 0], table[:, 1]), np.interp(t, table[:, 0], table[:, 2])


def _distance(scn: Scenario, sensor: int, t: np.ndarray) -> np.ndarray:
    sx, sy = source_position(scn.trajectory, t)
    px, py = scn.sensors[sensor]
    return np.hypot(sx - px, sy - py)


def emission_time(scn: Scenario, sensor: int, t) -> np.ndarray:
    """Retarded time at which the sound heard at t left the source."""
    t = np.asarray(t, dtype=np.float64)
    c = scn.speed_of_sound
    te = t - _distance(scn, sensor, t) / c
    for _ in range(RETARDED_ITERATIONS - 1):
        te = t - _distance(scn, sensor, te) / c
    return te


def propagate(scn: Scenario, sensor: int, t) -> np.ndarray:
    """
    Noiseless signal at a sensor at reception times t.

    Direct path plus tapped echoes, each read at the retarded emission time;
    inverse-distance attenuation applies to all paths when enabled.
    """
    t = np.asarray(t, dtype=np.float64)
    te = emission_time(scn, sensor, t)
    if scn.attenuation == "inverse-distance":
        gain = 1.0 / np.maximum(_distance(scn, sensor, te), MIN_DISTANCE)
    else:
        gain = 1.0

    out = _source_on_grid(scn.source, te, scn.sample_rate)
    for echo in scn.echoes:
        out = out + echo.gain * _source_on_grid(scn.source, te - echo.delay, scn.sample_rate)
    return gain * out


# ==================== Sampling ====================


def noise_std(scn: Scenario, sensor: int, block_signal: np.ndarray) -> float:
    """Standard deviation of the white noise added to one block."""
    power = float(np.mean(block_signal**2))
    if power == 0.0:
        return scn.noise_floor
    snr = scn.snr_for(sensor)
    if snr is None:
        return 0.0
    return math.sqrt(power / 10.0 ** (snr / 10.0))


def _block_noise(scn: Scenario, sensor: int, block: int, block_signal: np.ndarray) -> np.ndarray:
    std = noise_std(scn, sensor, block_signal)
    if std == 0.0:
        return np.zeros(scn.block_length)
    seq = np.random.SeedSequence(entropy=scn.seed, spawn_key=(sensor, block))
    return std * np.random.default_rng(seq).standard_normal(scn.block_length)


def _signal(scn: Scenario, sensor: int, start: int, stop: int) -> np.ndarray:
    return propagate(scn, sensor, np.arange(start, stop) / scn.sample_rate)


def render_stream(scn: Scenario, sensor: int, start: int, stop: int) -> np.ndarray:
    """
    Samples [start, stop) of one sensor's full-rate stream.

    The stream spans n_blocks * N samples; indices outside it are zero.
    Noise is drawn per block from a generator keyed by (seed, sensor, block).
    """
    n = scn.block_length
    stream_end = scn.n_blocks * n
    out = np.zeros(stop - start)
    lo, hi = max(start, 0), min(stop, stream_end)
    if hi <= lo:
        return out

    out[lo - start : hi - start] = _signal(scn, sensor, lo, hi)

    for b in range(lo // n, (hi - 1) // n + 1):
        b_lo, b_hi = b * n, (b + 1) * n
        if lo <= b_lo and b_hi <= hi:
            block_signal = out[b_lo - start : b_hi - start]
        else:
            block_signal = _signal(scn, sensor, b_lo, b_hi)
        noise = _block_noise(scn, sensor, b, block_signal)
        s_lo, s_hi = max(b_lo, lo), min(b_hi, hi)
        out[s_lo - start : s_hi - start] += noise[s_lo - b_lo : s_hi - b_lo]
    return out


def make_block(scn: Scenario, sensor: int, block: int) -> SampleBlock:
    """One sensor's block; sensor 0 also carries the extended reference window."""
    n = scn.block_length
    start = block * n
    extended = None
    if sensor == 0:
        half = n // 2
        extended = render_stream(scn, 0, start - half, start - half + 2 * n + 1)
        samples = extended[half : half + n].copy()
    else:
        samples = render_stream(scn, sensor, start, start + n)
    return SampleBlock(
        sensor_id=sensor,
        block_index=block,
        start_time=start / scn.sample_rate,
        samples=samples,
        extended=extended,
    )


def prepare_sampling(scn: Scenario) -> int:
    """
    Checks shared by every block sampler.

    Returns:
        Number of trailing samples that do not fill a block and are dropped

    Raises:
        TruncationError: file-backed source shorter than the scenario
    """
    check_source_duration(scn)
    partial = scn.total_samples - scn.n_blocks * scn.block_length
    if partial:
        logger.warning(f"Dropping trailing partial block of {partial} samples")
    return partial


def sample_blocks(scn: Scenario) -> Iterator[List[SampleBlock]]:
    """
    Blocks for every sensor, one list per block index.

    Blocks tile the stream without overlap; a trailing partial block is
    dropped.

    Raises:
        TruncationError: file-backed source shorter than the scenario
    """
    prepare_sampling(scn)
    logger.info(
        f"Sampling {scn.n_blocks} blocks of {scn.block_length} samples "
        f"({scn.block_duration:.4f} s each) for {len(scn.sensors)} sensors"
    )
    for b in range(scn.n_blocks):
        yield [make_block(scn, i, b) for i in range(len(scn.sensors))]
