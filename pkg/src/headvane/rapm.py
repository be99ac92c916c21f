"""Radiation pattern matching: the proposed orientation estimator.

Observed per-mic third-octave PSDs are compared against the radiation power
expected at each microphone for every candidate orientation.  The cost is the
cosine similarity between observed and expected mic vectors, averaged over
speech-relevant bands; the candidate maximizing it wins.  Microphone gain
adjustment (distance based or low-frequency automatic) removes systematic
level differences beforehand.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .directivity import DirectivityPattern
from .geometry import MicGeometry, wrap_deg
from .spectral import BandPowerFrame

# Band vectors with norm below this are skipped in the cost average.
_NORM_TOL = 1e-300


@dataclass(frozen=True)
class CandidateGrid:
    """Azimuth candidates searched by the estimator."""

    azimuths_deg: np.ndarray

    def __post_init__(self):
        az = np.asarray(self.azimuths_deg, dtype=float)
        if az.size == 0:
            raise ValueError("candidate grid must be nonempty")
        if np.any(az < -180.0) or np.any(az >= 180.0):
            raise ValueError("candidates must lie within [-180, 180)")
        object.__setattr__(self, "azimuths_deg", az)

    @classmethod
    def regular(cls, step_deg: float = 1.0, start_deg: float = -180.0, stop_deg: float = 180.0):
        if not step_deg > 0:
            raise ValueError(f"grid step must be positive, got {step_deg}")
        return cls(np.arange(start_deg, stop_deg, step_deg))

    def __len__(self) -> int:
        return int(self.azimuths_deg.size)


@dataclass(frozen=True)
class OrientationEstimate:
    theta_hat_deg: float
    confidence: float
    frame_index: int = -1

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")


def expected_powers(
    pattern: DirectivityPattern,
    geometry: MicGeometry,
    theta_deg: float,
    band_centers_hz,
) -> np.ndarray:
    """Expected radiation power toward each mic for candidate theta, (M, B).

    Entry (m, b) is the pattern power at azimuth theta_m - theta and the
    mic's elevation, in the band matching band_centers_hz[b].
    """
    band_idx = [pattern.band_index(c) for c in np.atleast_1d(band_centers_hz)]
    rel_az = wrap_deg(geometry.azimuths_deg - theta_deg)
    out = np.empty((len(geometry), len(band_idx)))
    for m, mic in enumerate(geometry.mics):
        for j, b in enumerate(band_idx):
            out[m, j] = pattern.interpolate(rel_az[m], mic.elevation_deg, b)
    return out


def cost_matrix(phi: np.ndarray, expected: np.ndarray):
    """Mean per-band cosine similarity between observed and expected powers.

    phi and expected are (M, B) with nonnegative entries.  Bands where either
    vector vanishes are skipped and the average renormalized; returns None if
    every band is degenerate.
    """
    phi = np.asarray(phi, dtype=float)
    expected = np.asarray(expected, dtype=float)
    if phi.shape != expected.shape:
        raise ValueError(f"shape mismatch: {phi.shape} vs {expected.shape}")
    pn = np.linalg.norm(phi, axis=0)
    en = np.linalg.norm(expected, axis=0)
    usable = (pn > _NORM_TOL) & (en > _NORM_TOL)
    if not np.any(usable):
        return None
    cosines = np.sum(phi[:, usable] * expected[:, usable], axis=0) / (pn[usable] * en[usable])
    return float(np.mean(np.clip(cosines, -1.0, 1.0)))


def cost(
    phi: np.ndarray,
    pattern: DirectivityPattern,
    geometry: MicGeometry,
    theta_deg: float,
    band_centers_hz,
):
    """J(theta) for one frame's observed band powers phi of shape (M, B)."""
    return cost_matrix(phi, expected_powers(pattern, geometry, theta_deg, band_centers_hz))


class RapmEstimator:
    """Grid search over candidate orientations with precomputed templates."""

    def __init__(
        self,
        pattern: DirectivityPattern,
        geometry: MicGeometry,
        grid: CandidateGrid,
        band_centers_hz,
    ):
        self.pattern = pattern
        self.geometry = geometry
        self.grid = grid
        self.band_centers_hz = np.atleast_1d(np.asarray(band_centers_hz, dtype=float))
        templates = np.stack(
            [
                expected_powers(pattern, geometry, theta, self.band_centers_hz)
                for theta in grid.azimuths_deg
            ]
        )  # (T, M, B)
        norms = np.linalg.norm(templates, axis=1, keepdims=True)
        self._usable = norms[:, 0, :] > _NORM_TOL  # (T, B)
        with np.errstate(invalid="ignore", divide="ignore"):
            self._unit_templates = np.where(norms > _NORM_TOL, templates / norms, 0.0)
        # Tie-break order: smallest |theta|, then smallest theta.
        az = grid.azimuths_deg
        self._tie_rank = np.lexsort((az, np.abs(az)))

    def costs(self, phi: np.ndarray) -> np.ndarray:
        """J(theta) over the whole grid for one frame, shape (T,); NaN where undefined."""
        return self.costs_batch(phi[None])[0]

    def costs_batch(self, phi: np.ndarray) -> np.ndarray:
        """J over the grid for frames stacked as (F, M, B) -> (F, T)."""
        phi = np.asarray(phi, dtype=float)
        norms = np.linalg.norm(phi, axis=1, keepdims=True)  # (F, 1, B)
        with np.errstate(invalid="ignore", divide="ignore"):
            unit_phi = np.where(norms > _NORM_TOL, phi / norms, 0.0)
        phi_usable = norms[:, 0, :] > _NORM_TOL  # (F, B)
        raw = np.einsum("tmb,fmb->ftb", self._unit_templates, unit_phi)
        usable = phi_usable[:, None, :] & self._usable[None, :, :]  # (F, T, B)
        counts = np.sum(usable, axis=2)
        j = np.where(counts > 0, np.sum(raw * usable, axis=2) / np.maximum(counts, 1), np.nan)
        return np.clip(j, -1.0, 1.0)  # NaN passes through clip

    def estimate(self, phi: np.ndarray, frame_index: int = -1):
        """Argmax of J over the grid; None when the frame is degenerate."""
        j = self.costs(phi)
        if np.all(np.isnan(j)):
            return None
        best = np.nanmax(j)
        winners = np.flatnonzero(j == best)
        pick = self._tie_rank[np.isin(self._tie_rank, winners)][0]
        return OrientationEstimate(
            theta_hat_deg=float(self.grid.azimuths_deg[pick]),
            confidence=float(np.clip(best, 0.0, 1.0)),
            frame_index=frame_index,
        )

    def estimate_batch(self, phi_frames: np.ndarray) -> list:
        """Per-frame estimates for (F, M, B); None entries mark no-decision frames."""
        j = self.costs_batch(phi_frames)
        out = []
        for f in range(j.shape[0]):
            row = j[f]
            if np.all(np.isnan(row)):
                out.append(None)
                continue
            best = np.nanmax(row)
            winners = np.flatnonzero(row == best)
            pick = self._tie_rank[np.isin(self._tie_rank, winners)][0]
            out.append(
                OrientationEstimate(
                    theta_hat_deg=float(self.grid.azimuths_deg[pick]),
                    confidence=float(np.clip(best, 0.0, 1.0)),
                    frame_index=f,
                )
            )
        return out


def distance_gains(geometry: MicGeometry) -> np.ndarray:
    """Free-field gain (d_m / d_ref)^2 equalizing 1/d^2 power decay."""
    d = geometry.distances_m
    return (d / d[geometry.reference_mic]) ** 2


def apply_gains(phi: np.ndarray, gains) -> np.ndarray:
    """Scale per-mic band powers: out[m, b] = gains[m] * phi[m, b]."""
    gains = np.asarray(gains, dtype=float)
    if np.any(gains <= 0):
        raise ValueError("gains must be positive")
    return np.asarray(phi, dtype=float) * gains[:, None]


class GainState:
    """Low-frequency automatic gain tracker (single writer, per session).

    Long-term band PSDs are recursively smoothed during speech-active frames;
    each mic's gain is the ratio of the reference mic's low-band power sum to
    its own.  The reference gain is exactly 1.
    """

    def __init__(self, num_mics: int, lfa_band_indices, coeff: float, reference_mic: int = 0):
        self.lfa_bands = np.asarray(lfa_band_indices, dtype=int)
        if self.lfa_bands.size == 0:
            raise ValueError("need at least one low-frequency band")
        self.coeff = float(coeff)
        self.reference_mic = reference_mic
        self.long_term_psd = None
        self.gains = np.ones(num_mics)

    def update(self, frame: BandPowerFrame) -> np.ndarray:
        """Advance on one frame; inactive frames leave the state unchanged."""
        if not frame.speech_active:
            return self.gains
        if self.long_term_psd is None:
            self.long_term_psd = frame.phi.copy()
        else:
            self.long_term_psd = (
                self.coeff * self.long_term_psd + (1.0 - self.coeff) * frame.phi
            )
        low = np.sum(self.long_term_psd[:, self.lfa_bands], axis=1)
        ref = low[self.reference_mic]
        if ref > 0.0:
            fresh = np.divide(ref, low, out=self.gains.copy(), where=low > 0.0)
            self.gains = fresh
        self.gains[self.reference_mic] = 1.0
        return self.gains
