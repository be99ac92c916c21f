"""Head orientation estimation from distributed microphones via speech radiation patterns."""

from .bands import Band, band_at, band_near, third_octave_bands
from .baselines import FeatureBands, hbv, hlbr, sd, vectorial_decision
from .directivity import (
    DirectivityPattern,
    ModelParams,
    PatternError,
    legendre,
    load_pattern,
    model_directivity,
    model_pattern,
    spherical_hankel2,
    spherical_hankel2_derivative,
)
from .geometry import MicGeometry, Microphone, wrap_deg
from .harness import ExperimentConfig, angular_error, run, summarize
from .rapm import (
    CandidateGrid,
    GainState,
    OrientationEstimate,
    RapmEstimator,
    apply_gains,
    cost,
    distance_gains,
    expected_powers,
)
from .simulate import SceneConfig, SyntheticSource, mix_at_snr, pink_noise, render
from .spectral import (
    BandPowerFrame,
    SmoothingConfig,
    StftConfig,
    band_bins,
    band_power,
    cepstral_smooth,
    smooth_psd,
    smoothing_coefficient,
    stft,
)

__version__ = "0.1.0"
