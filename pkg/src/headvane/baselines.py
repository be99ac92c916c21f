"""Reference head-orientation features and the vectorial decision.

Three per-microphone features exploit the low-pass character of speech
radiated toward the rear: the high-to-low-band energy ratio (HLBR), the
distance-weighted high-band spectral variance (HBV), and the spectral
difference of liftered high-band spectra against the microphone average (SD).
Each feature weights a talker-to-mic steering vector; the azimuth of the
vector sum is the orientation estimate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import MicGeometry, wrap_deg
from .spectral import StftConfig, bin_range

# Resultants shorter than this (relative to total feature weight) count as
# no-decision rather than an arbitrary angle.
_RESULTANT_TOL = 1e-12


@dataclass(frozen=True)
class FeatureBands:
    """Bin index sets for the baseline features."""

    hlbr_lo: np.ndarray
    hlbr_hi: np.ndarray
    var_hi: np.ndarray

    @classmethod
    def from_config(
        cls,
        cfg: StftConfig,
        hlbr_lo_hz=(200.0, 400.0),
        hlbr_hi_hz=(4000.0, 8000.0),
        var_hi_hz=(5000.0, 8000.0),
    ) -> "FeatureBands":
        return cls(
            hlbr_lo=bin_range(cfg, *hlbr_lo_hz),
            hlbr_hi=bin_range(cfg, *hlbr_hi_hz),
            var_hi=bin_range(cfg, *var_hi_hz),
        )


def hlbr(magnitudes, lo_bins, hi_bins):
    """High-to-low-band energy ratio of one magnitude spectrum.

    Scale invariant.  Returns None when the low band carries no energy
    (feature undefined, frame skipped).
    """
    magnitudes = np.asarray(magnitudes, dtype=float)
    lo = float(np.sum(magnitudes[lo_bins] ** 2))
    if lo <= 0.0:
        return None
    return float(np.sum(magnitudes[hi_bins] ** 2)) / lo


def hbv(magnitudes, distance_m: float, hi_bins) -> float:
    """Distance-weighted variance of the high-band magnitude spectrum."""
    if not distance_m > 0:
        raise ValueError(f"distance must be positive, got {distance_m}")
    band = np.asarray(magnitudes, dtype=float)[hi_bins]
    return float(np.mean((band - band.mean()) ** 2) / distance_m)


def sd(liftered_magnitudes, hi_bins) -> np.ndarray:
    """Spectral difference per mic: high-band deviation from the mic average.

    Input is the stack (M, num_bins) of cepstrally liftered magnitude
    spectra.  The returned features sum to zero across mics by construction.
    """
    mags = np.asarray(liftered_magnitudes, dtype=float)
    if mags.ndim != 2 or mags.shape[0] < 2:
        raise ValueError("sd expects a stack of spectra from M >= 2 mics")
    band = mags[:, hi_bins]
    return np.mean(band - band.mean(axis=0, keepdims=True), axis=1)


def vectorial_decision(features, geometry: MicGeometry):
    """Azimuth of the feature-weighted sum of talker-to-mic unit vectors.

    Negative features (possible for SD) flip their vector.  Returns the
    estimate in [-180, 180), or None when the resultant vanishes.
    """
    f = np.asarray(features, dtype=float)
    if f.shape != (len(geometry),):
        raise ValueError("need exactly one feature per microphone")
    resultant = geometry.steering_vectors().T @ f
    scale = np.sum(np.abs(f))
    if scale <= 0.0 or np.hypot(*resultant) < _RESULTANT_TOL * scale:
        return None
    return float(wrap_deg(np.degrees(np.arctan2(resultant[1], resultant[0]))))


def resultant_strength(features, geometry: MicGeometry) -> float:
    """Normalized resultant length in [0, 1]; the baselines' match quality."""
    f = np.asarray(features, dtype=float)
    scale = np.sum(np.abs(f))
    if scale <= 0.0:
        return 0.0
    resultant = geometry.steering_vectors().T @ f
    return float(min(np.hypot(*resultant) / scale, 1.0))
