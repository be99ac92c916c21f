"""Free-field acoustic scene renderer.

Produces multichannel microphone signals from a mono source, a directivity
pattern, the talker orientation and the mic constellation: per mic the source
is shaped by a zero-phase filter matching the pattern's third-octave
magnitudes toward that mic, delayed by the propagation time (nearest sample),
and scaled by the relative 1/d law plus any per-mic gain offset.  Pink noise
at a target mean SNR and oracle speech-activity flags complete the scene.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import bilinear, lfilter

from .directivity import SPEED_OF_SOUND, DirectivityPattern
from .geometry import MicGeometry, wrap_deg
from .spectral import StftConfig
from .wavio import read_wav

# Oracle speech-activity threshold on clean-source frame energy.
ACTIVITY_THRESHOLD_DBFS = -50.0

# Approximate long-term speech spectrum envelope (dB, arbitrary reference)
# at the standard third-octave centers: broad maximum near 250-500 Hz with a
# gentle high-frequency rolloff.
_SPEECH_ENVELOPE_HZ = np.array(
    [100, 125, 160, 200, 250, 315, 400, 500, 630, 800,
     1000, 1250, 1600, 2000, 2500, 3150, 4000, 5000, 6300, 8000], dtype=float
)
_SPEECH_ENVELOPE_DB = np.array(
    [-8.0, -5.0, -2.0, 0.0, 1.0, 1.0, 0.0, -1.0, -2.5, -4.0,
     -5.5, -7.0, -8.5, -10.0, -11.5, -13.0, -14.5, -16.5, -18.5, -20.5]
)


@dataclass(frozen=True)
class SyntheticSource:
    """Deterministic test source: pink, white, or speech-shaped noise."""

    kind: str = "speech"
    duration_s: float = 3.0
    seed: int = 0
    level_dbfs: float = -20.0
    modulation_hz: float = 4.0
    modulation_depth: float = 0.5
    silence_head_s: float = 0.0
    silence_tail_s: float = 0.0

    def __post_init__(self):
        if self.kind not in ("speech", "pink", "white"):
            raise ValueError(f"unknown source kind {self.kind!r}")
        if not self.duration_s > 0:
            raise ValueError("source duration must be positive")
        if not 0.0 <= self.modulation_depth < 1.0:
            raise ValueError("modulation depth must be in [0, 1)")


@dataclass(frozen=True)
class SceneConfig:
    """One simulated scene: talker pose, mics, source, noise condition."""

    geometry: MicGeometry
    talker_orientation_deg: float
    source: SyntheticSource | str = field(default_factory=SyntheticSource)
    snr_db: float | None = None
    noise_seed: int = 0
    sample_rate: float = 16000.0
    name: str = "scene"
    position_name: str = "p0"
    position_class: str = "center"

    def __post_init__(self):
        if self.snr_db is not None and not math.isfinite(self.snr_db):
            raise ValueError("snr_db must be finite (use null/None for noiseless)")
        if self.position_class not in ("center", "off-center"):
            raise ValueError("position_class must be center or off-center")

    def to_dict(self) -> dict:
        src = self.source
        return {
            "name": self.name,
            "position_name": self.position_name,
            "position_class": self.position_class,
            "talker_orientation_deg": self.talker_orientation_deg,
            "geometry": self.geometry.to_dict(),
            "source": src if isinstance(src, str) else {
                "kind": src.kind,
                "duration_s": src.duration_s,
                "seed": src.seed,
                "level_dbfs": src.level_dbfs,
                "modulation_hz": src.modulation_hz,
                "modulation_depth": src.modulation_depth,
                "silence_head_s": src.silence_head_s,
                "silence_tail_s": src.silence_tail_s,
            },
            "snr_db": self.snr_db,
            "noise_seed": self.noise_seed,
            "sample_rate": self.sample_rate,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "SceneConfig":
        src = raw.get("source", {})
        if isinstance(src, dict):
            source = SyntheticSource(**src)
        else:
            source = str(src)
        return cls(
            geometry=MicGeometry.from_dict(raw["geometry"]),
            talker_orientation_deg=float(raw["talker_orientation_deg"]),
            source=source,
            snr_db=raw.get("snr_db"),
            noise_seed=int(raw.get("noise_seed", 0)),
            sample_rate=float(raw.get("sample_rate", 16000.0)),
            name=str(raw.get("name", "scene")),
            position_name=str(raw.get("position_name", "p0")),
            position_class=str(raw.get("position_class", "center")),
        )


def _pink_filter_sections(sample_rate: float) -> list[tuple[np.ndarray, np.ndarray]]:
    """First-order pole/zero shelving sections approximating a -3 dB/oct slope.

    Pole/zero pairs are spaced one third of an octave apart (pole fp, zero
    fp * 2^(1/6)), each dropping ~1 dB, and mapped to the digital domain by a
    prewarped bilinear transform so the slope holds up to ~0.95 Nyquist at any
    sample rate.
    """
    nyquist = sample_rate / 2.0
    sections = []
    fp = 8.0
    while fp * 2 ** (1 / 6) < 0.95 * nyquist:
        fz = fp * 2 ** (1 / 6)
        wp = 2.0 * sample_rate * math.tan(math.pi * fp / sample_rate)
        wz = 2.0 * sample_rate * math.tan(math.pi * fz / sample_rate)
        b, a = bilinear([1.0 / wz, 1.0], [1.0 / wp, 1.0], fs=sample_rate)
        sections.append((b, a))
        fp *= 2 ** (1 / 3)
    return sections


def pink_noise(num_samples: int, seed: int, sample_rate: float = 16000.0) -> np.ndarray:
    """Unit-RMS pink noise (-3 dB/octave), deterministic for a fixed seed."""
    if num_samples <= 0:
        raise ValueError(f"length must be positive, got {num_samples}")
    warmup = max(1024, int(0.25 * sample_rate))
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(num_samples + warmup)
    for b, a in _pink_filter_sections(sample_rate):
        x = lfilter(b, a, x)
    x = x[warmup:]
    return x / np.sqrt(np.mean(x**2))


def _shape_spectrum(signal: np.ndarray, freqs_hz, gains_db, sample_rate: float) -> np.ndarray:
    """Zero-phase magnitude shaping; gains interpolate linearly in dB over log f."""
    n = signal.size
    spectrum = np.fft.rfft(signal)
    f = np.fft.rfftfreq(n, 1.0 / sample_rate)
    log_f = np.log(np.maximum(f, 1e-6))
    gains = np.interp(log_f, np.log(np.asarray(freqs_hz, dtype=float)), gains_db)
    return np.fft.irfft(spectrum * 10.0 ** (gains / 20.0), n=n)


def speech_shaped_noise(num_samples: int, seed: int, sample_rate: float = 16000.0) -> np.ndarray:
    """White noise shaped to an approximate long-term speech envelope, unit RMS."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(num_samples)
    x = _shape_spectrum(x, _SPEECH_ENVELOPE_HZ, _SPEECH_ENVELOPE_DB, sample_rate)
    return x / np.sqrt(np.mean(x**2))


def synthesize_source(spec: SyntheticSource, sample_rate: float) -> np.ndarray:
    """Render a synthetic source to samples at the requested level."""
    n = int(round(spec.duration_s * sample_rate))
    if spec.kind == "pink":
        x = pink_noise(n, spec.seed, sample_rate)
    elif spec.kind == "white":
        x = np.random.default_rng(spec.seed).standard_normal(n)
        x /= np.sqrt(np.mean(x**2))
    else:
        x = speech_shaped_noise(n, spec.seed, sample_rate)
        if spec.modulation_depth > 0.0:
            x *= _syllabic_envelope(n, spec, sample_rate)
            x /= np.sqrt(np.mean(x**2))
    x *= 10.0 ** (spec.level_dbfs / 20.0)
    head = int(round(spec.silence_head_s * sample_rate))
    tail = int(round(spec.silence_tail_s * sample_rate))
    if head or tail:
        x = np.concatenate([np.zeros(head), x, np.zeros(tail)])
    return x


def _syllabic_envelope(n: int, spec: SyntheticSource, sample_rate: float) -> np.ndarray:
    """Slow random amplitude modulation, bounded away from zero."""
    rng = np.random.default_rng(spec.seed + 0x5EED)
    # One-pole lowpass on white noise with cutoff at the modulation rate.
    coeff = math.exp(-2.0 * math.pi * spec.modulation_hz / sample_rate)
    m = lfilter([1.0 - coeff], [1.0, -coeff], rng.standard_normal(n))
    m = m / (np.std(m) + 1e-30)
    env = 1.0 + spec.modulation_depth * np.tanh(m)
    return env


def _load_source(scene: SceneConfig) -> np.ndarray:
    if isinstance(scene.source, str):
        rate, data = read_wav(scene.source, expected_rate=scene.sample_rate)
        if data.shape[0] != 1:
            raise ValueError(f"{scene.source}: source WAV must be mono")
        return data[0]
    return synthesize_source(scene.source, scene.sample_rate)


def activity_flags(source: np.ndarray, cfg: StftConfig,
                   threshold_dbfs: float = ACTIVITY_THRESHOLD_DBFS) -> np.ndarray:
    """Oracle per-frame speech flags: clean-source frame RMS above threshold."""
    nf = cfg.num_frames(source.size)
    starts = np.arange(nf) * cfg.hop_size
    frames = source[starts[:, None] + np.arange(cfg.frame_size)[None, :]]
    energy = np.mean(frames**2, axis=1)
    dbfs = 10.0 * np.log10(np.maximum(energy, 1e-30))
    return dbfs > threshold_dbfs


def active_sample_mask(flags: np.ndarray, cfg: StftConfig, num_samples: int) -> np.ndarray:
    """Union of the sample spans of all speech-active frames."""
    mask = np.zeros(num_samples, dtype=bool)
    for i in np.flatnonzero(flags):
        start = i * cfg.hop_size
        mask[start : start + cfg.frame_size] = True
    return mask


def render(
    scene: SceneConfig,
    pattern: DirectivityPattern,
    stft_cfg: StftConfig | None = None,
    speed_of_sound: float = SPEED_OF_SOUND,
) -> tuple[np.ndarray, np.ndarray]:
    """Render the clean multichannel signals plus oracle speech flags.

    Returns (signals, flags) with signals of shape (M, N).  Per mic, the
    source spectrum is multiplied by the pattern's band magnitudes toward the
    mic (dB-linear interpolation between band centers over log frequency,
    flat beyond the outermost centers), then delayed and distance-scaled.
    """
    cfg = stft_cfg or StftConfig(sample_rate=scene.sample_rate)
    if cfg.sample_rate != scene.sample_rate:
        raise ValueError("scene and STFT sample rates differ")
    source = _load_source(scene)
    flags = activity_flags(source, cfg)
    geometry = scene.geometry
    centers = pattern.band_centers_hz
    d_ref = geometry.mics[geometry.reference_mic].distance_m
    signals = np.empty((len(geometry), source.size))
    for m, mic in enumerate(geometry.mics):
        rel_az = float(wrap_deg(mic.azimuth_deg - scene.talker_orientation_deg))
        band_power = np.array(
            [pattern.interpolate(rel_az, mic.elevation_deg, b) for b in range(pattern.num_bands)]
        )
        band_db = 10.0 * np.log10(np.maximum(band_power, 1e-30))  # amplitude dB of sqrt(power)
        shaped = _shape_spectrum(source, centers, band_db, scene.sample_rate)
        delay = int(round(mic.distance_m / speed_of_sound * scene.sample_rate))
        delayed = np.zeros_like(shaped)
        if delay < shaped.size:
            delayed[delay:] = shaped[: shaped.size - delay]
        scale = (d_ref / mic.distance_m) * 10.0 ** (mic.gain_offset_db / 20.0)
        signals[m] = scale * delayed
    return signals, flags


def mix_at_snr(
    clean: np.ndarray,
    noise: np.ndarray,
    snr_db: float | None,
    active_mask: np.ndarray | None = None,
) -> np.ndarray:
    """Add noise scaled so the mic-averaged SNR (dB) hits the target exactly.

    One global factor scales all noise channels; per-channel noise must be
    independent realizations.  snr_db=None returns the clean signals.
    """
    if snr_db is None:
        return clean.copy()
    clean = np.asarray(clean, dtype=float)
    noise = np.asarray(noise, dtype=float)
    if clean.shape != noise.shape:
        raise ValueError(f"clean {clean.shape} and noise {noise.shape} shapes differ")
    region = slice(None) if active_mask is None else active_mask
    e_speech = np.sum(clean[:, region] ** 2, axis=1)
    e_noise = np.sum(noise[:, region] ** 2, axis=1)
    if np.any(e_noise <= 0.0):
        raise ValueError("noise channel with zero energy in the active region")
    if np.any(e_speech <= 0.0):
        raise ValueError("clean channel with zero energy in the active region")
    snr0 = np.mean(10.0 * np.log10(e_speech / e_noise))
    gain = 10.0 ** ((snr0 - snr_db) / 20.0)
    return clean + gain * noise


def scene_noise(scene: SceneConfig, num_samples: int) -> np.ndarray:
    """Independent pink noise per channel, seeded from the scene noise seed."""
    m = len(scene.geometry)
    noise = np.empty((m, num_samples))
    for ch in range(m):
        noise[ch] = pink_noise(num_samples, scene.noise_seed * 1009 + ch, scene.sample_rate)
        noise[ch] *= 10.0 ** (scene.geometry.mics[ch].gain_offset_db / 20.0)
    return noise


def render_noisy(
    scene: SceneConfig,
    pattern: DirectivityPattern,
    stft_cfg: StftConfig | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Full scene: clean render plus per-channel pink noise at the target SNR."""
    cfg = stft_cfg or StftConfig(sample_rate=scene.sample_rate)
    clean, flags = render(scene, pattern, cfg)
    if scene.snr_db is None:
        return clean, flags
    noise = scene_noise(scene, clean.shape[1])
    mask = active_sample_mask(flags, cfg, clean.shape[1])
    return mix_at_snr(clean, noise, scene.snr_db, mask), flags


def load_scene(path) -> SceneConfig:
    import json

    return SceneConfig.from_dict(json.loads(Path(path).read_text()))
