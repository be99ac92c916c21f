"""WAV reading/writing: PCM16 or float32, mono or multichannel, no resampling."""

from __future__ import annotations

import numpy as np
from scipy.io import wavfile


class AudioFileError(ValueError):
    """Raised for unreadable or incompatible audio files."""


def read_wav(path, expected_rate: float | None = None) -> tuple[int, np.ndarray]:
    """Read a WAV file to float64 in [-1, 1), shape (channels, samples).

    Accepts 16-bit PCM and 32-bit float data.  The sample rate must equal
    expected_rate when given; no resampling is performed.
    """
    try:
        rate, data = wavfile.read(path)
    except (ValueError, OSError) as exc:
        raise AudioFileError(f"{path}: {exc}") from exc
    if data.dtype == np.int16:
        data = data.astype(np.float64) / 32768.0
    elif data.dtype in (np.float32, np.float64):
        data = data.astype(np.float64)
    elif data.dtype == np.int32:
        data = data.astype(np.float64) / 2147483648.0
    else:
        raise AudioFileError(f"{path}: unsupported sample format {data.dtype}")
    if data.ndim == 1:
        data = data[None, :]
    else:
        data = data.T
    if expected_rate is not None and rate != expected_rate:
        raise AudioFileError(
            f"{path}: sample rate {rate} Hz does not match configured {expected_rate} Hz"
        )
    return rate, data


def write_wav(path, rate: float, channels: np.ndarray):
    """Write float32 WAV from (channels, samples) or (samples,) data."""
    channels = np.asarray(channels, dtype=np.float32)
    data = channels if channels.ndim == 1 else channels.T
    wavfile.write(path, int(rate), data)
