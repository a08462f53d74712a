"""Randomized SVD of spiked matrices: simulation and exact asymptotics."""
from .errors import ConfigError, DomainError, NoBracketError, RankDeficiencyWarning
from .mp_law import ModelParams, MpParams, bulk_edges, bulk_params, mp_cdf, mp_density, mp_median
from .rsvd import RsvdResult, full_svd_reference, range_finder, rsvd
from .shrinker import DenoiseConfig, DenoiseResult, denoise, optimal_weight
from .sketch import SketchOperator, make_sketch
from .spiked import SpikedInstance, sample_spiked
from .theory import (
    SpikePrediction,
    detection_threshold,
    overlaps,
    predict,
    spike_forward,
    spike_inverse,
)

__version__ = "0.1.0"
