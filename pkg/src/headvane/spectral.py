"""STFT, recursive PSD smoothing, third-octave band powers, cepstral liftering."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import get_window

from .bands import Band

log = logging.getLogger(__name__)

# Floor applied to magnitudes before the log in cepstral smoothing.
MAGNITUDE_FLOOR = 1e-12

# Lifter length for the spectral-difference feature's cepstral smoothing:
# removes harmonic fine structure at 16 kHz / 512-point frames while keeping
# the formant envelope.
DEFAULT_LIFTER_BINS = 24


@dataclass(frozen=True)
class StftConfig:
    sample_rate: float = 16000.0
    frame_size: int = 512
    hop_size: int = 256
    window: str = "hann"

    def __post_init__(self):
        if self.frame_size <= 0 or self.frame_size & (self.frame_size - 1):
            raise ValueError(f"frame size must be a power of two, got {self.frame_size}")
        if not 0 < self.hop_size <= self.frame_size:
            raise ValueError(f"hop size must be in (0, frame size], got {self.hop_size}")
        if self.window != "hann":
            raise ValueError(f"unsupported window {self.window!r}")
        if not self.sample_rate > 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate}")

    @property
    def num_bins(self) -> int:
        return self.frame_size // 2 + 1

    @property
    def bin_hz(self) -> float:
        return self.sample_rate / self.frame_size

    @property
    def nyquist_hz(self) -> float:
        return self.sample_rate / 2.0

    def num_frames(self, num_samples: int) -> int:
        if num_samples < self.frame_size:
            raise ValueError(
                f"signal of {num_samples} samples shorter than one frame ({self.frame_size})"
            )
        return 1 + (num_samples - self.frame_size) // self.hop_size


@dataclass(frozen=True)
class SmoothingConfig:
    tau_psd_s: float = 0.25
    tau_lfa_s: float = 5.0

    def __post_init__(self):
        if not (self.tau_psd_s > 0 and self.tau_lfa_s > 0):
            raise ValueError("smoothing time constants must be positive")


def smoothing_coefficient(tau_s: float, cfg: StftConfig) -> float:
    """Per-frame recursive smoothing coefficient exp(-hop / (fs * tau))."""
    if not tau_s > 0:
        raise ValueError(f"time constant must be positive, got {tau_s}")
    return math.exp(-cfg.hop_size / (cfg.sample_rate * tau_s))


def stft(signal, cfg: StftConfig) -> np.ndarray:
    """Hann-windowed STFT, shape (num_frames, frame_size/2 + 1).

    Frames advance by hop_size; only complete frames are emitted.  Bin k is
    centered at k * sample_rate / frame_size.  No normalization is applied.
    """
    signal = np.asarray(signal, dtype=float)
    if signal.ndim != 1:
        raise ValueError("stft expects a single channel")
    nf = cfg.num_frames(signal.size)
    window = get_window("hann", cfg.frame_size, fftbins=True)
    starts = np.arange(nf) * cfg.hop_size
    frames = signal[starts[:, None] + np.arange(cfg.frame_size)[None, :]]
    return np.fft.rfft(frames * window, axis=1)


def smooth_psd(previous, instantaneous, coeff: float):
    """One recursive smoothing step; previous=None initializes to the input."""
    instantaneous = np.asarray(instantaneous, dtype=float)
    if previous is None:
        return instantaneous.copy()
    previous = np.asarray(previous, dtype=float)
    if previous.shape != instantaneous.shape:
        raise ValueError("previous and instantaneous PSDs must have equal shape")
    return coeff * previous + (1.0 - coeff) * instantaneous


class RecursiveSmoother:
    """Streaming first-order smoother; the first update seeds the state."""

    def __init__(self, coeff: float):
        if not 0.0 <= coeff < 1.0:
            raise ValueError(f"smoothing coefficient must be in [0, 1), got {coeff}")
        self.coeff = coeff
        self.state = None

    def update(self, values) -> np.ndarray:
        self.state = smooth_psd(self.state, values, self.coeff)
        return self.state


def smooth_sequence(values: np.ndarray, coeff: float, axis: int = 0) -> np.ndarray:
    """Batch equivalent of RecursiveSmoother along one axis (first frame seeds)."""
    from scipy.signal import lfilter

    x = np.moveaxis(np.asarray(values, dtype=float), axis, 0)
    zi = (coeff * x[0])[None]
    y, _ = lfilter([1.0 - coeff], [1.0, -coeff], x, axis=0, zi=zi)
    return np.moveaxis(y, 0, axis)


def band_bins(cfg: StftConfig, bands: list[Band]) -> list[tuple[Band, np.ndarray]]:
    """STFT bin index sets per third-octave band.

    Bin k belongs to band b iff its center frequency lies in
    [lower_edge, upper_edge), clipped at Nyquist.  A band lying entirely at or
    above Nyquist is an error.  Bands left empty by coarse bin spacing are
    merged upward into the next band (which, as the empty band contributes no
    bins, drops the empty entry); the merge is logged.
    """
    out = []
    pending_merge: list[Band] = []
    for band in bands:
        if band.lower_hz >= cfg.nyquist_hz:
            raise ValueError(
                f"band {band.nominal_hz:g} Hz lies above Nyquist ({cfg.nyquist_hz:g} Hz)"
            )
        k_lo = int(np.ceil(band.lower_hz / cfg.bin_hz - 1e-9))
        k_hi = int(np.floor(min(band.upper_hz * (1 - 1e-12), cfg.nyquist_hz) / cfg.bin_hz + 1e-9))
        k_hi = min(k_hi, cfg.num_bins - 1)
        bins = np.arange(k_lo, k_hi + 1)
        if bins.size == 0:
            pending_merge.append(band)
            continue
        if pending_merge:
            log.info(
                "empty band(s) %s merged upward into %g Hz band",
                [b.nominal_hz for b in pending_merge],
                band.nominal_hz,
            )
            pending_merge = []
        out.append((band, bins))
    if pending_merge:
        if not out:
            raise ValueError("no band contains any STFT bin")
        log.info(
            "empty band(s) %s merged downward into %g Hz band",
            [b.nominal_hz for b in pending_merge],
            out[-1][0].nominal_hz,
        )
    return out


def band_power(psd, bins) -> float:
    """Arithmetic mean of a PSD vector over one band's bin set."""
    bins = np.asarray(bins)
    if bins.size == 0:
        raise ValueError("empty band bin set")
    return float(np.mean(np.asarray(psd, dtype=float)[bins]))


def band_power_matrix(psd: np.ndarray, banding: list[tuple[Band, np.ndarray]]) -> np.ndarray:
    """Band powers for a PSD array of shape (..., num_bins) -> (..., num_bands)."""
    psd = np.asarray(psd, dtype=float)
    return np.stack([np.mean(psd[..., bins], axis=-1) for _, bins in banding], axis=-1)


def bin_range(cfg: StftConfig, lo_hz: float, hi_hz: float) -> np.ndarray:
    """Indices of bins whose centers lie in [lo_hz, hi_hz] (inclusive)."""
    if not 0 <= lo_hz <= hi_hz:
        raise ValueError(f"invalid frequency range [{lo_hz}, {hi_hz}]")
    if lo_hz > cfg.nyquist_hz:
        raise ValueError(f"range [{lo_hz}, {hi_hz}] lies above Nyquist")
    k_lo = int(np.ceil(lo_hz / cfg.bin_hz - 1e-9))
    k_hi = int(np.floor(min(hi_hz, cfg.nyquist_hz) / cfg.bin_hz + 1e-9))
    bins = np.arange(k_lo, min(k_hi, cfg.num_bins - 1) + 1)
    if bins.size == 0:
        raise ValueError(f"no STFT bin inside [{lo_hz}, {hi_hz}] Hz")
    return bins


@dataclass
class BandPowerFrame:
    """Per-frame per-microphone third-octave PSDs, shape (M, B)."""

    frame_index: int
    phi: np.ndarray
    speech_active: bool

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=float)
        if self.phi.ndim != 2 or self.phi.shape[0] < 2:
            raise ValueError("phi must be (mics >= 2, bands)")
        if np.any(self.phi < 0):
            raise ValueError("band powers must be nonnegative")


def cepstral_smooth(magnitudes, lifter_bins: int = DEFAULT_LIFTER_BINS, frame_size=None):
    """Cepstral low-pass liftering of a one-sided magnitude spectrum.

    The real cepstrum of the log magnitude is computed on the full (even
    symmetric) spectrum of length frame_size, quefrency bins 0..lifter_bins-1
    are kept (with their symmetric mirror), the rest zeroed, and the result
    transformed back and exponentiated.  Works on shape (..., num_bins).
    """
    magnitudes = np.asarray(magnitudes, dtype=float)
    num_bins = magnitudes.shape[-1]
    if frame_size is None:
        frame_size = 2 * (num_bins - 1)
    if lifter_bins < 1:
        raise ValueError(f"lifter length must be >= 1, got {lifter_bins}")
    log_mag = np.log(np.maximum(magnitudes, MAGNITUDE_FLOOR))
    ceps = np.fft.irfft(log_mag, n=frame_size, axis=-1)
    lifter = np.zeros(frame_size)
    q = min(lifter_bins, num_bins)
    lifter[:q] = 1.0
    if q > 1:
        lifter[frame_size - q + 1 :] = 1.0
    smoothed = np.fft.rfft(ceps * lifter, axis=-1).real
    return np.exp(smoothed)
