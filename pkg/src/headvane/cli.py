"""Command line interface.

Subcommands: model-pattern, simulate, estimate, eval.  Exit codes: 0 on
success, 2 for configuration errors, 3 for data errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import harness
from .directivity import ModelParams, PatternError, load_pattern, model_pattern
from .geometry import load_geometry
from .rapm import CandidateGrid, GainState, RapmEstimator, apply_gains, distance_gains
from .simulate import load_scene, render_noisy
from .wavio import AudioFileError, read_wav, write_wav

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="headvane", description="Head orientation estimation from distributed microphones")
    p.add_argument("-v", "--verbose", action="store_true", help="Enable info logging")
    sub = p.add_subparsers(dest="command", required=True)

    mp = sub.add_parser("model-pattern", help="Emit a radiation pattern file from the analytic model")
    mp.add_argument("--head-radius-m", type=float, default=0.09)
    mp.add_argument("--mouth-half-angle-deg", type=float, default=5.7)
    mp.add_argument("--max-order", type=int, default=50)
    mp.add_argument("--speed-of-sound", type=float, default=343.0)
    mp.add_argument("--band-lo-hz", type=float, default=100.0)
    mp.add_argument("--band-hi-hz", type=float, default=8000.0)
    mp.add_argument("--az-step-deg", type=float, default=1.0)
    mp.add_argument("--elevations-deg", default="0", help="Comma-separated elevation grid")
    mp.add_argument("--figure", default=None, help="Optional PNG plot of the pattern")
    mp.add_argument("--out", required=True, help="Output pattern JSON path")

    sim = sub.add_parser("simulate", help="Render a scene config to WAV plus activity flags")
    sim.add_argument("--config", required=True, help="Scene config JSON")
    sim.add_argument("--pattern", default=None, help="Pattern file (default: analytic model)")
    sim.add_argument("--seed", type=int, default=None, help="Override the scene noise seed")
    sim.add_argument("--out", required=True, help="Output directory")

    est = sub.add_parser("estimate", help="Per-frame orientation estimates for a recorded WAV")
    est.add_argument("--audio", required=True, help="Multichannel WAV (one channel per mic)")
    est.add_argument("--geometry", required=True, help="Mic geometry JSON")
    est.add_argument("--pattern", default=None, help="Pattern file (default: analytic model)")
    est.add_argument("--method", default="rapm-model", choices=list(harness.METHODS))
    est.add_argument("--gain-mode", default="lfa", choices=list(harness.GAIN_MODES))
    est.add_argument("--grid-step", type=float, default=1.0)
    est.add_argument("--out", required=True, help="Output CSV path")

    ev = sub.add_parser("eval", help="Batch evaluation over scenes")
    ev.add_argument("--config", required=True, help="Experiment config JSON")
    ev.add_argument("--method", action="append", default=None, help="Override methods (repeatable)")
    ev.add_argument("--gain-mode", action="append", default=None, help="Override gain modes (repeatable)")
    ev.add_argument("--grid-step", type=float, default=None)
    ev.add_argument("--seed", type=int, default=None, help="Override preset scene seed")
    ev.add_argument("--out", required=True, help="Output directory")
    return p


def _cmd_model_pattern(args) -> int:
    from .bands import third_octave_bands

    params = ModelParams(
        head_radius_m=args.head_radius_m,
        piston_half_angle_rad=math.radians(args.mouth_half_angle_deg),
        max_order=args.max_order,
        speed_of_sound=args.speed_of_sound,
    )
    elevations = np.array(sorted({float(e) for e in args.elevations_deg.split(",")} | {0.0}))
    pattern = model_pattern(
        params,
        bands=third_octave_bands(args.band_lo_hz, args.band_hi_hz),
        azimuth_deg=np.arange(-180.0, 180.0, args.az_step_deg),
        elevation_deg=elevations,
    )
    pattern.save(args.out)
    if args.figure:
        from . import report

        report.pattern_figure(pattern, args.figure)
    print(f"wrote {args.out}: {pattern.num_bands} bands, "
          f"{pattern.azimuth_deg.size} azimuths, {pattern.elevation_deg.size} elevations")
    return EXIT_OK


def _cmd_simulate(args) -> int:
    scene = load_scene(args.config)
    if args.seed is not None:
        scene = scene.__class__.from_dict({**scene.to_dict(), "noise_seed": args.seed})
    if args.pattern:
        pattern = load_pattern(args.pattern)
    else:
        elevations = np.array(sorted({0.0} | {m.elevation_deg for m in scene.geometry.mics}))
        pattern = model_pattern(ModelParams(), elevation_deg=elevations)
    signals, flags = render_noisy(scene, pattern)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    wav_path = out / f"{scene.name}.wav"
    write_wav(wav_path, scene.sample_rate, signals)
    flags_path = out / f"{scene.name}_flags.csv"
    with open(flags_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame_index", "speech_active"])
        for i, a in enumerate(flags):
            writer.writerow([i, int(a)])
    print(f"wrote {wav_path} and {flags_path} ({signals.shape[0]} channels, "
          f"{signals.shape[1]} samples, {int(np.sum(flags))} active frames)")
    return EXIT_OK


def _cmd_estimate(args) -> int:
    from .spectral import StftConfig

    geometry = load_geometry(args.geometry)
    cfg = StftConfig()
    rate, signals = read_wav(args.audio, expected_rate=cfg.sample_rate)
    if signals.shape[0] != len(geometry):
        raise AudioFileError(
            f"{args.audio}: {signals.shape[0]} channels but geometry has {len(geometry)} mics"
        )
    if args.method == "rapm-measured" and not args.pattern:
        raise harness.ConfigError("method rapm-measured requires --pattern")

    flags = harness.vad_flags(signals[geometry.reference_mic], cfg)
    config = harness.ExperimentConfig(
        scenes=[_dummy_scene(geometry)],
        methods=[args.method],
        gain_modes=[args.gain_mode],
        grid_step_deg=args.grid_step,
        measured_pattern_path=args.pattern,
    )
    if args.pattern:
        pattern = load_pattern(args.pattern)
    else:
        elevations = np.array(sorted({0.0} | {m.elevation_deg for m in geometry.mics}))
        pattern = model_pattern(ModelParams(), elevation_deg=elevations)

    estimates = estimate_wav(signals, flags, geometry, pattern, config)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame", "theta_hat_deg", "confidence", "speech_active"])
        for frame, theta, conf, active in estimates:
            writer.writerow(
                [frame, "" if theta is None else f"{theta:.3f}",
                 f"{conf:.6f}", int(active)]
            )
    decided = sum(1 for _, t, _, a in estimates if a and t is not None)
    print(f"wrote {args.out}: {decided} decided frames of {len(estimates)}")
    return EXIT_OK


def _dummy_scene(geometry):
    from .simulate import SceneConfig

    return SceneConfig(geometry=geometry, talker_orientation_deg=0.0)


def estimate_wav(signals, flags, geometry, pattern, config) -> list:
    """Per-frame (frame, theta|None, confidence, active) for recorded audio."""
    from . import baselines as bl
    from .bands import third_octave_bands
    from .rapm import GainState, RapmEstimator, distance_gains
    from .spectral import band_bins, band_power_matrix, smooth_sequence, smoothing_coefficient

    cfg = config.stft
    m_count = len(geometry)
    spectra = np.stack(
        [np.fft.rfft(harness._frames(signals[m], cfg), axis=1) for m in range(m_count)]
    )
    spectra = np.moveaxis(spectra, 0, 1)
    lam = smoothing_coefficient(config.smoothing.tau_psd_s, cfg)
    psd = smooth_sequence(np.abs(spectra) ** 2, lam, axis=0)
    mags = smooth_sequence(np.abs(spectra), lam, axis=0)
    banding = band_bins(cfg, third_octave_bands(100.0, 8000.0))
    centers = np.array([b.nominal_hz for b, _ in banding])
    phi = band_power_matrix(psd, banding)
    f_count = phi.shape[0]

    rapm_sel = harness._select_bands(centers, config.bands.rapm_hz)
    lfa_sel = harness._select_bands(centers, config.bands.lfa_hz)
    mode = config.gain_modes[0]
    if mode == "none":
        gains = np.ones((f_count, m_count))
    elif mode == "distance":
        gains = np.tile(distance_gains(geometry), (f_count, 1))
    else:
        from .spectral import BandPowerFrame

        state = GainState(m_count, lfa_sel, smoothing_coefficient(config.smoothing.tau_lfa_s, cfg),
                          geometry.reference_mic)
        gains = np.empty((f_count, m_count))
        for f in range(f_count):
            gains[f] = state.update(BandPowerFrame(f, phi[f], bool(flags[f])))

    method = config.methods[0]
    out = []
    if method.startswith("rapm"):
        estimator = RapmEstimator(pattern, geometry, CandidateGrid.regular(config.grid_step_deg),
                                  centers[rapm_sel])
        phi_adj = phi[:, :, rapm_sel] * gains[:, :, None]
        for f in range(f_count):
            if not flags[f]:
                out.append((f, None, 0.0, False))
                continue
            est = estimator.estimate(phi_adj[f], f)
            if est is None:
                out.append((f, None, 0.0, True))
            else:
                out.append((f, est.theta_hat_deg, est.confidence, True))
    else:
        feature_bands = bl.FeatureBands.from_config(
            cfg,
            hlbr_lo_hz=config.bands.hlbr_lo_hz,
            hlbr_hi_hz=config.bands.hlbr_hi_hz,
            var_hi_hz=config.bands.var_hi_hz,
        )
        scaled = mags * np.sqrt(gains)[:, :, None]
        feats = harness._baseline_features(method, scaled, geometry, feature_bands, cfg.frame_size)
        for f in range(f_count):
            if not flags[f]:
                out.append((f, None, 0.0, False))
                continue
            fv = feats[f]
            theta = None if np.any(np.isnan(fv)) else bl.vectorial_decision(fv, geometry)
            if theta is None:
                out.append((f, None, 0.0, True))
            else:
                out.append((f, theta, bl.resultant_strength(fv, geometry), True))
    return out


def _cmd_eval(args) -> int:
    raw = json.loads(Path(args.config).read_text())
    if args.seed is not None and "preset" in raw:
        raw["preset"]["seed"] = args.seed
    config = harness.config_from_dict(raw)
    if args.method:
        config.methods = args.method
    if args.gain_mode:
        config.gain_modes = args.gain_mode
    if args.grid_step is not None:
        config.grid_step_deg = args.grid_step
    config.__post_init__()
    summary, records = harness.run(config, out_dir=args.out)
    decided = sum(1 for r in records if not math.isnan(r.theta_hat_deg))
    print(f"wrote {args.out}/per_frame.csv, summary.json, errors_boxplot.png "
          f"({decided} decided frames, {len(summary['scene_failures'])} scene failures)")
    for cell in summary["cells"]:
        if cell["scope"] != "class" or not cell.get("frames"):
            continue
        print(
            f"  {cell['method']:>13s} {cell['gain_mode']:>8s} {cell['label']:>10s}: "
            f"median {cell['median']:+7.2f} deg, IQR [{cell['q25']:+7.2f}, {cell['q75']:+7.2f}], "
            f"10/90% [{cell['q10']:+7.2f}, {cell['q90']:+7.2f}] ({cell['frames']} frames)"
        )
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {
        "model-pattern": _cmd_model_pattern,
        "simulate": _cmd_simulate,
        "estimate": _cmd_estimate,
        "eval": _cmd_eval,
    }
    try:
        return handlers[args.command](args)
    except (harness.ConfigError, json.JSONDecodeError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PatternError, AudioFileError, FileNotFoundError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
