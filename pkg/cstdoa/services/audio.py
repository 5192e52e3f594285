"""PCM audio ingestion and block cutting for recorded channels."""

import logging
from functools import lru_cache
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
from scipy.io import wavfile

from cstdoa.exceptions import AudioFormatError
from cstdoa.models import AudioInput, SampleBlock

logger = logging.getLogger(__name__)

PCM_SCALE = 32768.0


def read_wav(path: Path, channel: int = 0) -> Tuple[float, np.ndarray]:
    """
    Read one channel of a 16-bit PCM WAV file.

    Returns:
        (sample rate in Hz, samples scaled to [-1, 1))
    """
    try:
        rate, data = wavfile.read(str(path))
    except (ValueError, EOFError) as e:
        raise AudioFormatError(f"{path}: not a readable WAV file ({e})") from e

    if data.dtype != np.int16:
        raise AudioFormatError(f"{path}: expected 16-bit PCM, got {data.dtype}")
    if data.ndim == 2:
        if channel >= data.shape[1]:
            raise AudioFormatError(
                f"{path}: channel {channel} requested, file has {data.shape[1]}"
            )
        data = data[:, channel]
    elif channel != 0:
        raise AudioFormatError(f"{path}: mono file has no channel {channel}")

    return float(rate), data.astype(np.float64) / PCM_SCALE


def read_raw(path: Path, sample_rate: float) -> Tuple[float, np.ndarray]:
    """Read headerless little-endian int16 samples."""
    raw = Path(path).read_bytes()
    if len(raw) % 2:
        raise AudioFormatError(f"{path}: odd byte count for 16-bit samples")
    data = np.frombuffer(raw, dtype="<i2")
    return float(sample_rate), data.astype(np.float64) / PCM_SCALE


def write_wav(path: Path, sample_rate: float, samples: np.ndarray) -> None:
    """Write samples in [-1, 1) as 16-bit PCM (mono, or columns as channels)."""
    pcm = np.clip(np.round(np.asarray(samples) * PCM_SCALE), -32768, 32767).astype(np.int16)
    wavfile.write(str(path), int(round(sample_rate)), pcm)


@lru_cache(maxsize=16)
def load_channel(
    path: Path, fmt: str = "wav", channel: int = 0, sample_rate: Optional[float] = None
) -> Tuple[float, np.ndarray]:
    """Cached read of one channel; the returned array is read-only."""
    if fmt == "wav":
        rate, samples = read_wav(path, channel)
    elif fmt == "raw":
        if sample_rate is None:
            raise AudioFormatError(f"{path}: raw input needs a declared sample rate")
        rate, samples = read_raw(path, sample_rate)
    else:
        raise AudioFormatError(f"{path}: unsupported format '{fmt}'")
    samples.setflags(write=False)
    logger.info(f"Loaded {len(samples)} samples at {rate:g} Hz from {path}")
    return rate, samples


def load_audio(inp: AudioInput) -> Tuple[float, np.ndarray]:
    """Read the channel an AudioInput points at."""
    return load_channel(Path(inp.path), inp.format, inp.channel, inp.sample_rate)


def window_slice(samples: np.ndarray, start: int, length: int) -> np.ndarray:
    """samples[start:start+length] with zeros outside the recording."""
    out = np.zeros(length)
    lo = max(start, 0)
    hi = min(start + length, len(samples))
    if hi > lo:
        out[lo - start : hi - start] = samples[lo:hi]
    return out


def audio_blocks(
    reference: np.ndarray,
    sensor: np.ndarray,
    block_length: int,
    sample_rate: float,
) -> Tuple[List[Tuple[SampleBlock, SampleBlock]], int]:
    """
    Cut two recordings into aligned blocks.

    The reference block carries the 2N+1 extended window, zero-padded at the
    file edges. Trailing samples that do not fill a block are dropped.

    Returns:
        ([(reference block, sensor block), ...], number of dropped partial blocks)
    """
    usable = min(len(reference), len(sensor))
    n_blocks = usable // block_length
    dropped = 1 if usable % block_length else 0
    half = block_length // 2

    pairs = []
    for b in range(n_blocks):
        start = b * block_length
        t0 = start / sample_rate
        ref_block = SampleBlock(
            sensor_id=0,
            block_index=b,
            start_time=t0,
            samples=np.array(reference[start : start + block_length], dtype=np.float64),
            extended=window_slice(reference, start - half, 2 * block_length + 1),
        )
        sensor_block = SampleBlock(
            sensor_id=1,
            block_index=b,
            start_time=t0,
            samples=np.array(sensor[start : start + block_length], dtype=np.float64),
        )
        pairs.append((ref_block, sensor_block))
    return pairs, dropped
