"""Monte-Carlo experiment engine and result emission."""
from .config import EXPERIMENTS, ExperimentConfig, ExperimentRecord, load_config
from .experiments import (
    run_angles,
    run_bulk_hist,
    run_conjecture,
    run_experiment,
    run_finite_n,
    run_outlier,
    run_shrinkage,
    run_sketched_pca,
    run_snr_curves,
    run_universality,
)
from .io import emit, read_matrix, read_records, run_metadata, write_matrix

__all__ = [
    "EXPERIMENTS",
    "ExperimentConfig",
    "ExperimentRecord",
    "load_config",
    "run_angles",
    "run_bulk_hist",
    "run_conjecture",
    "run_experiment",
    "run_finite_n",
    "run_outlier",
    "run_shrinkage",
    "run_sketched_pca",
    "run_snr_curves",
    "run_universality",
    "emit",
    "read_matrix",
    "read_records",
    "run_metadata",
    "write_matrix",
]
