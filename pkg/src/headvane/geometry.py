"""Microphone constellation relative to the talker."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np


def wrap_deg(angle):
    """Wrap an angle (scalar or array) to [-180, 180)."""
    return (np.asarray(angle, dtype=float) + 180.0) % 360.0 - 180.0


@dataclass(frozen=True)
class Microphone:
    """One microphone's pose relative to the talker position."""

    azimuth_deg: float
    distance_m: float
    elevation_deg: float = 0.0
    gain_offset_db: float = 0.0

    def __post_init__(self):
        if not self.distance_m > 0:
            raise ValueError(f"microphone distance must be positive, got {self.distance_m}")
        object.__setattr__(self, "azimuth_deg", float(wrap_deg(self.azimuth_deg)))


@dataclass(frozen=True)
class MicGeometry:
    """Distributed microphones around a talker, angles in the scene frame."""

    mics: tuple[Microphone, ...]
    reference_mic: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mics", tuple(self.mics))
        if len(self.mics) < 2:
            raise ValueError(f"need at least 2 microphones, got {len(self.mics)}")
        if not 0 <= self.reference_mic < len(self.mics):
            raise ValueError(f"reference mic {self.reference_mic} out of range")

    def __len__(self) -> int:
        return len(self.mics)

    @property
    def azimuths_deg(self) -> np.ndarray:
        return np.array([m.azimuth_deg for m in self.mics])

    @property
    def elevations_deg(self) -> np.ndarray:
        return np.array([m.elevation_deg for m in self.mics])

    @property
    def distances_m(self) -> np.ndarray:
        return np.array([m.distance_m for m in self.mics])

    @property
    def gain_offsets_db(self) -> np.ndarray:
        return np.array([m.gain_offset_db for m in self.mics])

    def steering_vectors(self) -> np.ndarray:
        """Unit vectors talker -> mic in the horizontal plane, shape (M, 2)."""
        az = np.radians(self.azimuths_deg)
        return np.stack([np.cos(az), np.sin(az)], axis=1)

    def rotated(self, delta_deg: float) -> "MicGeometry":
        """Same constellation with all azimuths rotated by delta_deg."""
        mics = tuple(
            Microphone(
                azimuth_deg=m.azimuth_deg + delta_deg,
                distance_m=m.distance_m,
                elevation_deg=m.elevation_deg,
                gain_offset_db=m.gain_offset_db,
            )
            for m in self.mics
        )
        return MicGeometry(mics=mics, reference_mic=self.reference_mic)

    def with_gain_offsets(self, offsets_db) -> "MicGeometry":
        offsets_db = np.asarray(offsets_db, dtype=float)
        if offsets_db.shape != (len(self.mics),):
            raise ValueError("need one gain offset per microphone")
        mics = tuple(
            Microphone(m.azimuth_deg, m.distance_m, m.elevation_deg, float(o))
            for m, o in zip(self.mics, offsets_db)
        )
        return MicGeometry(mics=mics, reference_mic=self.reference_mic)

    @classmethod
    def from_positions(cls, mic_xyz, talker_xyz=(0.0, 0.0, 0.0), reference_mic: int = 0):
        """Build relative geometry from cartesian positions in meters.

        Scene convention: x points along the 0-degree reference direction,
        y to the left, z up; azimuth is atan2(y, x).
        """
        talker = np.asarray(talker_xyz, dtype=float)
        mics = []
        for pos in mic_xyz:
            d = np.asarray(pos, dtype=float) - talker
            horizontal = math.hypot(d[0], d[1])
            mics.append(
                Microphone(
                    azimuth_deg=math.degrees(math.atan2(d[1], d[0])),
                    distance_m=float(np.linalg.norm(d)),
                    elevation_deg=math.degrees(math.atan2(d[2], horizontal)),
                )
            )
        return cls(mics=tuple(mics), reference_mic=reference_mic)

    def to_dict(self) -> dict:
        return {
            "reference_mic": self.reference_mic,
            "mics": [
                {
                    "azimuth_deg": m.azimuth_deg,
                    "distance_m": m.distance_m,
                    "elevation_deg": m.elevation_deg,
                    "gain_offset_db": m.gain_offset_db,
                }
                for m in self.mics
            ],
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "MicGeometry":
        mics = tuple(
            Microphone(
                azimuth_deg=m["azimuth_deg"],
                distance_m=m["distance_m"],
                elevation_deg=m.get("elevation_deg", 0.0),
                gain_offset_db=m.get("gain_offset_db", 0.0),
            )
            for m in raw["mics"]
        )
        return cls(mics=mics, reference_mic=int(raw.get("reference_mic", 0)))


def load_geometry(path) -> MicGeometry:
    raw = json.loads(Path(path).read_text())
    return MicGeometry.from_dict(raw)
