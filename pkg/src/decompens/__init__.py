"""Decomposition-based ensemble forecasting for traffic-flow series."""
from .aggregation import (MetaDataset, Stacker, aggregate_baseline, apply_stacker, fit_stacker,
                          load_stacker, save_stacker)
from .config import ExperimentConfig, load_config, profile_config
from .data_pipeline import (SplitSpec, WindowPair, WindowSet, aggregate_resolution,
                            bootstrap_bags, build_sequences, chronological_split,
                            decompose_dataset, ingest_csv, slice_windows, write_csv)
from .experiment_harness import (MetricsReport, emit_report, mark_significant, rmse,
                                 run_experiment, timing_profile)
from .kernels import BACKEND
from .learners import ForecastModel, LearnerSpec, fit, load_model, predict, save_model, tune
from .noise_ensembles import NoiseConfig, align_trials, ceemdan, decompose, eemd
from .signal_core import (Decomposition, SiftConfig, TimeSeries, build_envelopes,
                          count_zero_crossings, emd, find_extrema, is_imf, sift_once)
from .synthetic import SyntheticSpec, generate_synthetic

__version__ = "0.1.0"
