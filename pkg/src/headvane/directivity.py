"""Speech radiation directivity.

Two sources of directivity are supported: an analytic model of a circular
piston set in a rigid sphere (mouth in head), evaluated in the far field, and
tabulated patterns loaded from JSON files (e.g. derived from published
directivity measurements).  Both yield a :class:`DirectivityPattern`, a
band x elevation x azimuth table of squared-magnitude directivity normalized
to the frontal direction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bands import Band, third_octave_bands

SPEED_OF_SOUND = 343.0  # m/s, air at 20 C

# Floor for dB-domain interpolation of zero power entries.
_POWER_FLOOR = 1e-30


class PatternError(ValueError):
    """Raised for malformed or non-normalized directivity pattern data."""


@dataclass(frozen=True)
class ModelParams:
    """Geometry and numerics of the piston-in-sphere radiation model."""

    head_radius_m: float = 0.09
    piston_half_angle_rad: float = math.radians(5.7)
    max_order: int = 50
    speed_of_sound: float = SPEED_OF_SOUND

    def __post_init__(self):
        if not self.head_radius_m > 0:
            raise ValueError(f"head radius must be positive, got {self.head_radius_m}")
        if not 0 < self.piston_half_angle_rad < math.pi / 2:
            raise ValueError(
                f"piston half angle must be in (0, pi/2), got {self.piston_half_angle_rad}"
            )
        if self.max_order < 1:
            raise ValueError(f"max order must be >= 1, got {self.max_order}")
        if not self.speed_of_sound > 0:
            raise ValueError(f"speed of sound must be positive, got {self.speed_of_sound}")


def legendre(n: int, x):
    """Legendre polynomial P_n(x) by the three-term recurrence.

    x may be a scalar or ndarray with |x| <= 1.
    """
    if n < 0:
        raise ValueError(f"order must be >= 0, got {n}")
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > 1.0 + 1e-12):
        raise ValueError("Legendre argument outside [-1, 1]")
    x = np.clip(x, -1.0, 1.0)
    p_prev = np.ones_like(x)
    if n == 0:
        return p_prev if p_prev.ndim else float(p_prev)
    p = x.copy()
    for k in range(1, n):
        p, p_prev = ((2 * k + 1) * x * p - k * p_prev) / (k + 1), p
    return p if p.ndim else float(p)


def _legendre_table(nmax: int, x: np.ndarray) -> np.ndarray:
    """P_n(x) for all n = 0..nmax, shape (nmax+1,) + x.shape."""
    table = np.empty((nmax + 1,) + x.shape)
    table[0] = 1.0
    if nmax >= 1:
        table[1] = x
    for k in range(1, nmax):
        table[k + 1] = ((2 * k + 1) * x * table[k] - k * table[k - 1]) / (k + 1)
    return table


def _hankel2_sequence(nmax: int, x: float) -> np.ndarray:
    """h_n^(2)(x) for n = 0..nmax via upward recurrence (stable: y_n grows)."""
    if not x > 0:
        raise ValueError(f"spherical Hankel argument must be positive, got {x}")
    h = np.empty(nmax + 1, dtype=complex)
    h[0] = 1j * np.exp(-1j * x) / x
    if nmax >= 1:
        h[1] = (-x + 1j) * np.exp(-1j * x) / x**2
    for n in range(1, nmax):
        h[n + 1] = (2 * n + 1) / x * h[n] - h[n - 1]
    return h


def spherical_hankel2(n: int, x: float) -> complex:
    """Spherical Hankel function of the second kind, h_n^(2)(x) = j_n(x) - i y_n(x)."""
    if n < 0:
        raise ValueError(f"order must be >= 0, got {n}")
    return complex(_hankel2_sequence(n, x)[n])


def spherical_hankel2_derivative(n: int, x: float) -> complex:
    """d/dx h_n^(2)(x), via h_n' = h_{n-1} - ((n+1)/x) h_n (h_0' = -h_1)."""
    if n < 0:
        raise ValueError(f"order must be >= 0, got {n}")
    h = _hankel2_sequence(n + 1, x)
    if n == 0:
        return complex(-h[1])
    return complex(h[n - 1] - (n + 1) / x * h[n])


def _mode_coefficients(params: ModelParams, freq_hz: float) -> np.ndarray:
    """Per-order weights kappa_n * i^(n+1) / h'_n(ka) of the far-field series."""
    ka = 2.0 * math.pi * freq_hz * params.head_radius_m / params.speed_of_sound
    nmax = params.max_order
    h = _hankel2_sequence(nmax + 1, ka)
    hp = np.empty(nmax + 1, dtype=complex)
    hp[0] = -h[1]
    orders = np.arange(1, nmax + 1)
    hp[1:] = h[orders - 1] - (orders + 1) / ka * h[orders]
    cos_alpha = math.cos(params.piston_half_angle_rad)
    p_alpha = _legendre_table(nmax + 1, np.asarray(cos_alpha))
    kappa = np.empty(nmax + 1)
    kappa[0] = 1.0 - cos_alpha
    kappa[1:] = p_alpha[orders - 1] - p_alpha[orders + 1]
    return kappa * (1j ** (np.arange(nmax + 1) + 1)) / hp


def model_directivity(params: ModelParams, freq_hz: float, theta_deg):
    """Squared-magnitude far-field directivity |D(f, theta)|^2 of the model.

    theta_deg is the angle off the frontal axis; the pattern is rotationally
    symmetric, so only |theta| matters.  Scalar or ndarray input.
    """
    if not freq_hz > 0:
        raise ValueError(f"frequency must be positive, got {freq_hz}")
    theta = np.asarray(theta_deg, dtype=float)
    coeffs = _mode_coefficients(params, freq_hz)
    mu = np.cos(np.radians(theta))
    p_table = _legendre_table(params.max_order, np.atleast_1d(mu))
    s = np.tensordot(coeffs, p_table, axes=(0, 0))
    s0 = np.sum(coeffs)  # P_n(cos 0) = 1 for all n
    out = np.abs(s / s0) ** 2
    return out.reshape(theta.shape) if theta.ndim else float(out[0])


def great_circle_angle_deg(azimuth_deg, elevation_deg):
    """Angle between direction (azimuth, elevation) and the frontal axis."""
    az = np.radians(np.asarray(azimuth_deg, dtype=float))
    el = np.radians(np.asarray(elevation_deg, dtype=float))
    return np.degrees(np.arccos(np.clip(np.cos(el) * np.cos(az), -1.0, 1.0)))


@dataclass(frozen=True)
class DirectivityPattern:
    """Front-normalized squared-magnitude directivity on a band/angle grid.

    power is indexed [band][elevation][azimuth]; azimuth wraps periodically.
    """

    band_centers_hz: np.ndarray
    azimuth_deg: np.ndarray
    elevation_deg: np.ndarray
    power: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "band_centers_hz", np.asarray(self.band_centers_hz, dtype=float))
        object.__setattr__(self, "azimuth_deg", np.asarray(self.azimuth_deg, dtype=float))
        object.__setattr__(self, "elevation_deg", np.asarray(self.elevation_deg, dtype=float))
        object.__setattr__(self, "power", np.asarray(self.power, dtype=float))
        self._validate()

    def _validate(self):
        b, az, el, p = self.band_centers_hz, self.azimuth_deg, self.elevation_deg, self.power
        if b.ndim != 1 or b.size == 0 or np.any(np.diff(b) <= 0):
            raise PatternError("band_centers_hz must be a nonempty strictly increasing list")
        if az.ndim != 1 or az.size == 0 or np.any(np.diff(az) <= 0):
            raise PatternError("azimuth_deg must be a nonempty strictly increasing list")
        if np.any(az < -180.0) or np.any(az >= 180.0):
            raise PatternError("azimuth grid must lie within [-180, 180)")
        if el.ndim != 1 or el.size == 0 or np.any(np.diff(el) <= 0):
            raise PatternError("elevation_deg must be a nonempty strictly increasing list")
        if p.shape != (b.size, el.size, az.size):
            raise PatternError(
                f"power shape {p.shape} does not match (band, elevation, azimuth) grid "
                f"({b.size}, {el.size}, {az.size})"
            )
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise PatternError("power values must be finite and nonnegative")
        ia = np.flatnonzero(np.isclose(az, 0.0, atol=1e-9))
        ie = np.flatnonzero(np.isclose(el, 0.0, atol=1e-9))
        if ia.size == 0 or ie.size == 0:
            raise PatternError("grid must contain azimuth 0 and elevation 0 (frontal direction)")
        front = p[:, ie[0], ia[0]]
        if np.any(np.abs(front - 1.0) > 1e-6):
            raise PatternError(
                f"pattern is not front-normalized: power(0, 0) per band = {front}"
            )

    @property
    def num_bands(self) -> int:
        return int(self.band_centers_hz.size)

    def band_index(self, center_hz: float) -> int:
        """Index of the band whose center matches center_hz (within 8 %)."""
        i = int(np.argmin(np.abs(np.log(self.band_centers_hz / center_hz))))
        if abs(math.log(self.band_centers_hz[i] / center_hz)) > math.log(1.08):
            raise PatternError(f"no band near {center_hz} Hz in pattern")
        return i

    def _elevation_row(self, elevation_deg: float) -> int:
        return int(np.argmin(np.abs(self.elevation_deg - elevation_deg)))

    def interpolate(self, azimuth_deg, elevation_deg: float, band_index: int) -> np.ndarray:
        """Directivity power at the query direction for one band.

        Azimuth interpolates linearly in dB with periodic wrap; elevation uses
        the nearest grid row; queries at grid points return stored values
        exactly.  azimuth_deg may be scalar or ndarray.
        """
        if not 0 <= band_index < self.num_bands:
            raise IndexError(f"band index {band_index} out of range")
        row = self.power[band_index, self._elevation_row(elevation_deg)]
        az = np.atleast_1d(np.asarray(azimuth_deg, dtype=float))
        az = (az + 180.0) % 360.0 - 180.0

        grid = np.concatenate([self.azimuth_deg, self.azimuth_deg[:1] + 360.0])
        vals = np.concatenate([row, row[:1]])
        db = 10.0 * np.log10(np.maximum(vals, _POWER_FLOOR))
        # Queries left of the first grid point wrap onto the closing segment.
        q = np.where(az < grid[0], az + 360.0, az)
        out = 10.0 ** (np.interp(q, grid, db) / 10.0)

        exact = np.abs(q[:, None] - grid[None, :]) < 1e-9
        hit_q, hit_g = np.nonzero(exact)
        out[hit_q] = vals[hit_g]
        return out if np.ndim(azimuth_deg) else float(out[0])

    def to_dict(self) -> dict:
        return {
            "band_centers_hz": self.band_centers_hz.tolist(),
            "azimuth_deg": self.azimuth_deg.tolist(),
            "elevation_deg": self.elevation_deg.tolist(),
            "power": self.power.tolist(),
        }

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")


def load_pattern(path) -> DirectivityPattern:
    """Load a DirectivityPattern from its JSON file format."""
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise PatternError(f"{path}: not valid JSON ({exc})") from exc
    return pattern_from_dict(raw, origin=str(path))


def pattern_from_dict(raw: dict, origin: str = "pattern") -> DirectivityPattern:
    if not isinstance(raw, dict):
        raise PatternError(f"{origin}: expected a JSON object")
    missing = {"band_centers_hz", "azimuth_deg", "elevation_deg", "power"} - raw.keys()
    if missing:
        raise PatternError(f"{origin}: missing keys {sorted(missing)}")
    try:
        return DirectivityPattern(
            band_centers_hz=raw["band_centers_hz"],
            azimuth_deg=raw["azimuth_deg"],
            elevation_deg=raw["elevation_deg"],
            power=raw["power"],
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, PatternError):
            raise
        raise PatternError(f"{origin}: {exc}") from exc


def model_pattern(
    params: ModelParams,
    bands: list[Band] | None = None,
    azimuth_deg=None,
    elevation_deg=(0.0,),
    freqs_per_band: int = 5,
) -> DirectivityPattern:
    """Band-averaged model directivity on an azimuth/elevation grid.

    Each band value is the mean of |D|^2 over freqs_per_band log-spaced
    frequencies spanning the band edges.  The model is rotationally
    symmetric, so directions are collapsed to great-circle angles off the
    frontal axis.
    """
    if bands is None:
        bands = third_octave_bands(100.0, 8000.0)
    if azimuth_deg is None:
        azimuth_deg = np.arange(-180.0, 180.0)
    azimuth_deg = np.asarray(azimuth_deg, dtype=float)
    elevation_deg = np.asarray(elevation_deg, dtype=float)
    if len(bands) == 0 or azimuth_deg.size == 0 or elevation_deg.size == 0:
        raise ValueError("bands and angle grids must be nonempty")

    theta = great_circle_angle_deg(azimuth_deg[None, :], elevation_deg[:, None])
    power = np.empty((len(bands), elevation_deg.size, azimuth_deg.size))
    for i, band in enumerate(bands):
        freqs = np.geomspace(band.lower_hz, band.upper_hz, freqs_per_band)
        acc = np.zeros_like(theta)
        for f in freqs:
            acc += model_directivity(params, f, theta)
        power[i] = acc / freqs_per_band
    return DirectivityPattern(
        band_centers_hz=np.array([b.nominal_hz for b in bands]),
        azimuth_deg=azimuth_deg,
        elevation_deg=elevation_deg,
        power=power,
    )
