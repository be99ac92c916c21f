"""Batch evaluation: run estimators over scenes, summarize angular errors.

Every scene is rendered (or loaded), analyzed frame by frame, and each
requested method/gain-mode combination produces per-frame orientation
estimates on speech-active frames.  Signed angular errors are pooled per
position class (center vs off-center) and summarized by median, quartiles
and 10/90 % quantiles, mirroring the usual box-plot reporting.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import baselines as bl
from .bands import third_octave_bands
from .directivity import DirectivityPattern, ModelParams, load_pattern, model_pattern
from .geometry import MicGeometry
from .rapm import CandidateGrid, GainState, RapmEstimator, distance_gains
from .simulate import SceneConfig, SyntheticSource, render_noisy
from .spectral import (
    BandPowerFrame,
    SmoothingConfig,
    StftConfig,
    band_bins,
    band_power_matrix,
    cepstral_smooth,
    smooth_sequence,
    smoothing_coefficient,
)

log = logging.getLogger(__name__)

METHODS = ("hlbr", "hbv", "sd", "rapm-model", "rapm-measured")
GAIN_MODES = ("none", "distance", "lfa")

# Energy-threshold VAD for recorded audio without oracle flags.
VAD_THRESHOLD_DBFS = -50.0
VAD_HANGOVER_FRAMES = 2


class ConfigError(ValueError):
    """Raised for invalid experiment or scene configuration."""


def angular_error(estimate_deg: float, truth_deg: float) -> float:
    """Signed angular difference wrapped to [-180, 180)."""
    return ((estimate_deg - truth_deg + 180.0) % 360.0) - 180.0


def summarize(errors) -> dict:
    """Empirical quantiles (linear interpolation) of a signed error list."""
    e = np.asarray(errors, dtype=float)
    if e.size == 0:
        return {"frames": 0}
    q10, q25, med, q75, q90 = np.quantile(e, [0.10, 0.25, 0.50, 0.75, 0.90])
    return {
        "frames": int(e.size),
        "median": float(med),
        "q25": float(q25),
        "q75": float(q75),
        "q10": float(q10),
        "q90": float(q90),
    }


def vad_flags(
    reference_signal: np.ndarray,
    cfg: StftConfig,
    threshold_dbfs: float = VAD_THRESHOLD_DBFS,
    hangover_frames: int = VAD_HANGOVER_FRAMES,
) -> np.ndarray:
    """Energy-threshold voice activity with a short hangover."""
    nf = cfg.num_frames(reference_signal.size)
    starts = np.arange(nf) * cfg.hop_size
    frames = reference_signal[starts[:, None] + np.arange(cfg.frame_size)[None, :]]
    dbfs = 10.0 * np.log10(np.maximum(np.mean(frames**2, axis=1), 1e-30))
    raw = dbfs > threshold_dbfs
    flags = raw.copy()
    countdown = 0
    for i, active in enumerate(raw):
        if active:
            countdown = hangover_frames
        elif countdown > 0:
            flags[i] = True
            countdown -= 1
    return flags


@dataclass(frozen=True)
class BandConfig:
    """Frequency ranges (Hz) for features and the pattern-matching bands."""

    hlbr_lo_hz: tuple = (200.0, 400.0)
    hlbr_hi_hz: tuple = (4000.0, 8000.0)
    var_hi_hz: tuple = (5000.0, 8000.0)
    rapm_hz: tuple = (1000.0, 8000.0)
    lfa_hz: tuple = (100.0, 400.0)


@dataclass
class ExperimentConfig:
    scenes: list[SceneConfig]
    methods: list[str] = field(default_factory=lambda: ["hlbr", "hbv", "sd", "rapm-model"])
    gain_modes: list[str] = field(default_factory=lambda: ["none", "lfa"])
    stft: StftConfig = field(default_factory=StftConfig)
    smoothing: SmoothingConfig = field(default_factory=SmoothingConfig)
    bands: BandConfig = field(default_factory=BandConfig)
    grid_step_deg: float = 1.0
    model: ModelParams = field(default_factory=ModelParams)
    measured_pattern_path: str | None = None
    render_pattern_path: str | None = None  # None renders with the model pattern
    clamp_negative_features: bool = False

    def __post_init__(self):
        if not self.scenes:
            raise ConfigError("experiment needs at least one scene")
        if not self.methods:
            raise ConfigError("experiment needs at least one method")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown methods {bad}; valid: {list(METHODS)}")
        bad = [g for g in self.gain_modes if g not in GAIN_MODES]
        if bad:
            raise ConfigError(f"unknown gain modes {bad}; valid: {list(GAIN_MODES)}")
        if "rapm-measured" in self.methods and not self.measured_pattern_path:
            raise ConfigError("method rapm-measured requires measured_pattern_path")


@dataclass(frozen=True)
class FrameRecord:
    scene: str
    position_name: str
    position_class: str
    method: str
    gain_mode: str
    frame: int
    theta_hat_deg: float
    truth_deg: float
    error_deg: float
    confidence: float


def _model_params_from_dict(raw: dict) -> ModelParams:
    kwargs = {}
    if "head_radius_m" in raw:
        kwargs["head_radius_m"] = float(raw["head_radius_m"])
    if "piston_half_angle_deg" in raw:
        kwargs["piston_half_angle_rad"] = math.radians(float(raw["piston_half_angle_deg"]))
    elif "piston_half_angle_rad" in raw:
        kwargs["piston_half_angle_rad"] = float(raw["piston_half_angle_rad"])
    if "max_order" in raw:
        kwargs["max_order"] = int(raw["max_order"])
    if "speed_of_sound" in raw:
        kwargs["speed_of_sound"] = float(raw["speed_of_sound"])
    return ModelParams(**kwargs)


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Build an ExperimentConfig from its JSON form (see README for schema)."""
    try:
        if "preset" in raw:
            scenes = _scenes_from_preset(raw["preset"])
        else:
            scenes = [SceneConfig.from_dict(s) for s in raw["scenes"]]
        gain_modes = raw.get("gain_modes", raw.get("gain_mode", ["none", "lfa"]))
        if isinstance(gain_modes, str):
            gain_modes = [gain_modes]
        bands = BandConfig(**{k: tuple(v) for k, v in raw.get("bands", {}).items()})
        return ExperimentConfig(
            scenes=scenes,
            methods=list(raw.get("methods", ["hlbr", "hbv", "sd", "rapm-model"])),
            gain_modes=list(gain_modes),
            stft=StftConfig(**raw.get("stft", {})),
            smoothing=SmoothingConfig(**raw.get("smoothing", {})),
            bands=bands,
            grid_step_deg=float(raw.get("grid_step_deg", 1.0)),
            model=_model_params_from_dict(raw.get("model", {})),
            measured_pattern_path=raw.get("measured_pattern"),
            render_pattern_path=raw.get("render_pattern"),
            clamp_negative_features=bool(raw.get("clamp_negative_features", False)),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid experiment config: {exc}") from exc


def load_config(path) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    return config_from_dict(raw)


# ---------------------------------------------------------------------------
# Default experiment geometry: six ceiling mics imitating a van cabin, talker
# 25 cm below the mic plane.  Positions are approximate by design.

VAN_MIC_XY = ((1.10, -0.50), (1.10, 0.50), (0.0, -0.62), (0.0, 0.62), (-1.10, -0.50), (-1.10, 0.50))
VAN_MIC_HEIGHT_M = 0.25
VAN_POSITIONS = {
    "p0": ((-0.35, 0.00), "center"),
    "p1": ((-0.35, -0.45), "off-center"),
    "p2": ((-0.35, 0.45), "off-center"),
    "p3": ((0.55, -0.45), "off-center"),
    "p4": ((0.55, 0.45), "off-center"),
}


def van_geometry(talker_xy=(-0.35, 0.0)) -> MicGeometry:
    """Relative mic geometry for a talker at the given cabin position."""
    mic_xyz = [(x, y, VAN_MIC_HEIGHT_M) for x, y in VAN_MIC_XY]
    return MicGeometry.from_positions(mic_xyz, (talker_xy[0], talker_xy[1], 0.0))


def van_scenes(
    orientations_deg=(-90, -60, -30, 0, 30, 60, 90),
    positions=None,
    source: SyntheticSource | None = None,
    snr_db: float | None = None,
    seed: int = 0,
    sample_rate: float = 16000.0,
    gain_offsets_db=None,
) -> list[SceneConfig]:
    """Scene grid over positions x orientations for the van-style setup."""
    positions = dict(VAN_POSITIONS) if positions is None else positions
    base_source = source or SyntheticSource()
    scenes = []
    for pi, (pname, (xy, pclass)) in enumerate(positions.items()):
        geometry = van_geometry(xy)
        if gain_offsets_db is not None:
            geometry = geometry.with_gain_offsets(gain_offsets_db)
        for oi, theta in enumerate(orientations_deg):
            scene_seed = seed * 100003 + pi * 101 + oi
            scenes.append(
                SceneConfig(
                    geometry=geometry,
                    talker_orientation_deg=float(theta),
                    source=SyntheticSource(
                        kind=base_source.kind,
                        duration_s=base_source.duration_s,
                        seed=base_source.seed + scene_seed,
                        level_dbfs=base_source.level_dbfs,
                        modulation_hz=base_source.modulation_hz,
                        modulation_depth=base_source.modulation_depth,
                        silence_head_s=base_source.silence_head_s,
                        silence_tail_s=base_source.silence_tail_s,
                    ),
                    snr_db=snr_db,
                    noise_seed=scene_seed,
                    sample_rate=sample_rate,
                    name=f"{pname}_az{int(theta):+04d}",
                    position_name=pname,
                    position_class=pclass,
                )
            )
    return scenes


def _scenes_from_preset(raw: dict) -> list[SceneConfig]:
    if raw.get("name", "van") != "van":
        raise ConfigError(f"unknown scene preset {raw.get('name')!r}")
    source = SyntheticSource(**raw.get("source", {}))
    return van_scenes(
        orientations_deg=raw.get("orientations_deg", (-90, -60, -30, 0, 30, 60, 90)),
        source=source,
        snr_db=raw.get("snr_db"),
        seed=int(raw.get("seed", 0)),
        sample_rate=float(raw.get("sample_rate", 16000.0)),
        gain_offsets_db=raw.get("gain_offsets_db"),
    )


# ---------------------------------------------------------------------------


def build_patterns(config: ExperimentConfig) -> dict:
    """Patterns needed by the experiment, keyed by role.

    The model pattern's elevation grid contains every mic elevation occurring
    in the scenes (plus 0), so nearest-elevation lookups are exact.
    """
    elevations = {0.0}
    for scene in config.scenes:
        elevations.update(float(m.elevation_deg) for m in scene.geometry.mics)
    patterns = {}
    needs_model = "rapm-model" in config.methods or config.render_pattern_path is None
    if needs_model:
        patterns["model"] = model_pattern(
            config.model,
            bands=third_octave_bands(100.0, 8000.0),
            azimuth_deg=np.arange(-180.0, 180.0),
            elevation_deg=np.array(sorted(elevations)),
        )
    if "rapm-measured" in config.methods:
        patterns["measured"] = load_pattern(config.measured_pattern_path)
    if config.render_pattern_path is None:
        patterns["render"] = patterns["model"]
    else:
        patterns["render"] = load_pattern(config.render_pattern_path)
    return patterns


def _baseline_features(method, mags, geometry, bands: bl.FeatureBands, lifter_frame_size):
    """Per-frame per-mic features for one baseline method; NaN marks undefined."""
    f_count, m_count, _ = mags.shape
    if method == "hlbr":
        lo = np.sum(mags[:, :, bands.hlbr_lo] ** 2, axis=2)
        hi = np.sum(mags[:, :, bands.hlbr_hi] ** 2, axis=2)
        with np.errstate(invalid="ignore", divide="ignore"):
            feats = np.where(lo > 0.0, hi / np.maximum(lo, 1e-300), np.nan)
        return feats
    if method == "hbv":
        band = mags[:, :, bands.var_hi]
        var = np.mean((band - band.mean(axis=2, keepdims=True)) ** 2, axis=2)
        return var / geometry.distances_m[None, :]
    if method == "sd":
        liftered = cepstral_smooth(mags, frame_size=lifter_frame_size)
        band = liftered[:, :, bands.var_hi]
        return np.mean(band - band.mean(axis=1, keepdims=True), axis=2)
    raise ValueError(f"not a baseline method: {method}")


def evaluate_scene(
    scene: SceneConfig,
    config: ExperimentConfig,
    patterns: dict,
    estimators: dict,
) -> list[FrameRecord]:
    """Run all methods and gain modes over one scene."""
    cfg = config.stft
    signals, flags = render_noisy(scene, patterns["render"], cfg)
    geometry = scene.geometry
    m_count = len(geometry)

    spectra = np.stack([np.fft.rfft(_frames(signals[m], cfg), axis=1) for m in range(m_count)])
    # spectra: (M, F, K) -> frame-major (F, M, K)
    spectra = np.moveaxis(spectra, 0, 1)

    lam_psd = smoothing_coefficient(config.smoothing.tau_psd_s, cfg)
    psd = smooth_sequence(np.abs(spectra) ** 2, lam_psd, axis=0)
    mags = smooth_sequence(np.abs(spectra), lam_psd, axis=0)

    banding = band_bins(cfg, third_octave_bands(100.0, 8000.0))
    centers = np.array([band.nominal_hz for band, _ in banding])
    phi = band_power_matrix(psd, banding)  # (F, M, B)
    f_count = phi.shape[0]

    rapm_sel = _select_bands(centers, config.bands.rapm_hz)
    lfa_sel = _select_bands(centers, config.bands.lfa_hz)
    feature_bands = bl.FeatureBands.from_config(
        cfg,
        hlbr_lo_hz=config.bands.hlbr_lo_hz,
        hlbr_hi_hz=config.bands.hlbr_hi_hz,
        var_hi_hz=config.bands.var_hi_hz,
    )

    gains_per_mode = {}
    for mode in config.gain_modes:
        if mode == "none":
            gains_per_mode[mode] = np.ones((f_count, m_count))
        elif mode == "distance":
            gains_per_mode[mode] = np.tile(distance_gains(geometry), (f_count, 1))
        else:
            lam_lfa = smoothing_coefficient(config.smoothing.tau_lfa_s, cfg)
            state = GainState(m_count, lfa_sel, lam_lfa, geometry.reference_mic)
            gains = np.empty((f_count, m_count))
            for f in range(f_count):
                frame = BandPowerFrame(frame_index=f, phi=phi[f], speech_active=bool(flags[f]))
                gains[f] = state.update(frame)
            gains_per_mode[mode] = gains

    truth = scene.talker_orientation_deg
    records = []
    active_frames = np.flatnonzero(flags)
    for mode in config.gain_modes:
        gains = gains_per_mode[mode]
        for method in config.methods:
            if method.startswith("rapm"):
                estimator = estimators[method]
                phi_adj = phi[:, :, rapm_sel] * gains[:, :, None]
                estimates = estimator.estimate_batch(phi_adj[active_frames])
                for f, est in zip(active_frames, estimates):
                    if est is None:
                        records.append(_no_decision(scene, method, mode, int(f), truth))
                        continue
                    records.append(
                        FrameRecord(
                            scene=scene.name,
                            position_name=scene.position_name,
                            position_class=scene.position_class,
                            method=method,
                            gain_mode=mode,
                            frame=int(f),
                            theta_hat_deg=est.theta_hat_deg,
                            truth_deg=truth,
                            error_deg=angular_error(est.theta_hat_deg, truth),
                            confidence=est.confidence,
                        )
                    )
            else:
                scaled = mags[active_frames] * np.sqrt(gains[active_frames])[:, :, None]
                feats = _baseline_features(
                    method, scaled, geometry, feature_bands, cfg.frame_size
                )
                if config.clamp_negative_features:
                    feats = np.maximum(feats, 0.0)
                for i, f in enumerate(active_frames):
                    fv = feats[i]
                    if np.any(np.isnan(fv)):
                        records.append(_no_decision(scene, method, mode, int(f), truth))
                        continue
                    theta = bl.vectorial_decision(fv, geometry)
                    if theta is None:
                        records.append(_no_decision(scene, method, mode, int(f), truth))
                        continue
                    records.append(
                        FrameRecord(
                            scene=scene.name,
                            position_name=scene.position_name,
                            position_class=scene.position_class,
                            method=method,
                            gain_mode=mode,
                            frame=int(f),
                            theta_hat_deg=theta,
                            truth_deg=truth,
                            error_deg=angular_error(theta, truth),
                            confidence=bl.resultant_strength(fv, geometry),
                        )
                    )
    return records


def _frames(signal: np.ndarray, cfg: StftConfig) -> np.ndarray:
    from scipy.signal import get_window

    nf = cfg.num_frames(signal.size)
    starts = np.arange(nf) * cfg.hop_size
    window = get_window("hann", cfg.frame_size, fftbins=True)
    return signal[starts[:, None] + np.arange(cfg.frame_size)[None, :]] * window


_NO_DECISION = float("nan")


def _no_decision(scene, method, mode, frame, truth) -> FrameRecord:
    return FrameRecord(
        scene=scene.name,
        position_name=scene.position_name,
        position_class=scene.position_class,
        method=method,
        gain_mode=mode,
        frame=frame,
        theta_hat_deg=_NO_DECISION,
        truth_deg=truth,
        error_deg=_NO_DECISION,
        confidence=0.0,
    )


def _select_bands(centers: np.ndarray, range_hz) -> np.ndarray:
    lo, hi = range_hz
    sel = np.flatnonzero((centers >= lo * (1 - 1e-9)) & (centers <= hi * (1 + 1e-9)))
    if sel.size == 0:
        raise ConfigError(f"no third-octave band inside [{lo}, {hi}] Hz")
    return sel


def run(config: ExperimentConfig, out_dir=None) -> tuple[dict, list[FrameRecord]]:
    """Evaluate all scenes; optionally write CSV, JSON summary and figures.

    Per-scene failures are isolated: the failing scene is reported in the
    summary and the remaining scenes still run.
    """
    patterns = build_patterns(config)
    grid = CandidateGrid.regular(config.grid_step_deg)
    estimators = {}
    banding = band_bins(config.stft, third_octave_bands(100.0, 8000.0))
    centers = np.array([band.nominal_hz for band, _ in banding])
    rapm_centers = centers[_select_bands(centers, config.bands.rapm_hz)]

    records: list[FrameRecord] = []
    failures = []
    estimator_geometry = None
    for scene in config.scenes:
        try:
            if estimator_geometry is None or scene.geometry != estimator_geometry:
                estimator_geometry = scene.geometry
                for method in config.methods:
                    if method == "rapm-model":
                        estimators[method] = RapmEstimator(
                            patterns["model"], scene.geometry, grid, rapm_centers
                        )
                    elif method == "rapm-measured":
                        estimators[method] = RapmEstimator(
                            patterns["measured"], scene.geometry, grid, rapm_centers
                        )
            records.extend(evaluate_scene(scene, config, patterns, estimators))
        except Exception as exc:  # noqa: BLE001 - scene isolation is the contract
            log.error("scene %s failed: %s", scene.name, exc)
            failures.append({"scene": scene.name, "error": str(exc)})

    summary = summarize_records(records)
    summary["scene_failures"] = failures
    if out_dir is not None:
        write_outputs(summary, records, out_dir)
    return summary, records


def summarize_records(records: list[FrameRecord]) -> dict:
    """Quantile cells per (method, gain mode) for classes and positions."""
    cells = []
    keys_class = sorted({(r.method, r.gain_mode, r.position_class) for r in records})
    keys_pos = sorted({(r.method, r.gain_mode, r.position_name) for r in records})
    for scope, keys in (("class", keys_class), ("position", keys_pos)):
        for method, mode, label in keys:
            member = (
                (lambda r: r.position_class == label)
                if scope == "class"
                else (lambda r: r.position_name == label)
            )
            group = [
                r
                for r in records
                if r.method == method and r.gain_mode == mode and member(r)
            ]
            errors = [r.error_deg for r in group if not math.isnan(r.error_deg)]
            cell = {
                "method": method,
                "gain_mode": mode,
                "scope": scope,
                "label": label,
                "no_decision": sum(1 for r in group if math.isnan(r.error_deg)),
            }
            cell.update(summarize(errors))
            cells.append(cell)
    return {"cells": cells}


def write_outputs(summary: dict, records: list[FrameRecord], out_dir):
    """Write per_frame.csv, summary.json and the error box-plot figure."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_frame_csv(records, out / "per_frame.csv")
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    from . import report

    report.error_boxplot(summary, out / "errors_boxplot.png")


def write_frame_csv(records: list[FrameRecord], path):
    """Per-frame CSV of decided speech-active frames."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "scene",
                "position",
                "position_class",
                "method",
                "gain_mode",
                "frame",
                "theta_hat_deg",
                "truth_deg",
                "error_deg",
                "confidence",
                "speech_active",
            ]
        )
        for r in records:
            if math.isnan(r.theta_hat_deg):
                continue
            writer.writerow(
                [
                    r.scene,
                    r.position_name,
                    r.position_class,
                    r.method,
                    r.gain_mode,
                    r.frame,
                    f"{r.theta_hat_deg:.3f}",
                    f"{r.truth_deg:.3f}",
                    f"{r.error_deg:.3f}",
                    f"{r.confidence:.6f}",
                    1,
                ]
            )
