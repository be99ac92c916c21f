"""Base-2 fractional-octave (1/3-octave) band definitions.

Band edges are computed from exact base-2 centers 1000 * 2**(n/3) so that
adjacent band edges coincide exactly and bin sets partition the frequency
axis.  Bands are labeled with the usual nominal values (100, 125, 160, ...)
for display and file output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

# Nominal third-octave mantissas for one decade.
_NOMINAL_DECADE = (1.0, 1.25, 1.6, 2.0, 2.5, 3.15, 4.0, 5.0, 6.3, 8.0)

EDGE_RATIO = 2.0 ** (1.0 / 6.0)


@dataclass(frozen=True)
class Band:
    """One third-octave band, identified by its offset n from 1 kHz."""

    index: int
    center_hz: float
    nominal_hz: float

    @property
    def lower_hz(self) -> float:
        return self.center_hz / EDGE_RATIO

    @property
    def upper_hz(self) -> float:
        return self.center_hz * EDGE_RATIO


def _nominal_for_index(n: int) -> float:
    decade, pos = divmod(n, 10)
    return _NOMINAL_DECADE[pos] * 10.0 ** (decade + 3)


def band_at(index: int) -> Band:
    """Band n steps of a third octave away from 1 kHz."""
    return Band(index, 1000.0 * 2.0 ** (index / 3.0), _nominal_for_index(index))


def band_near(freq_hz: float) -> Band:
    """The band whose center is closest to freq_hz (log distance)."""
    if freq_hz <= 0:
        raise ValueError(f"frequency must be positive, got {freq_hz}")
    return band_at(round(3.0 * math.log2(freq_hz / 1000.0)))


def third_octave_bands(lo_hz: float = 100.0, hi_hz: float = 8000.0) -> list[Band]:
    """All bands whose nominal center lies in [lo_hz, hi_hz].

    The range is interpreted on nominal labels, so e.g. (100, 8000) yields the
    20 standard bands 100 Hz .. 8 kHz.
    """
    if not lo_hz > 0 or not hi_hz >= lo_hz:
        raise ValueError(f"invalid band range [{lo_hz}, {hi_hz}]")
    n_lo = math.floor(3.0 * math.log2(lo_hz / 1000.0) - 0.5)
    n_hi = math.ceil(3.0 * math.log2(hi_hz / 1000.0) + 0.5)
    bands = [band_at(n) for n in range(n_lo, n_hi + 1)]
    return [b for b in bands if lo_hz * (1 - 1e-9) <= b.nominal_hz <= hi_hz * (1 + 1e-9)]
