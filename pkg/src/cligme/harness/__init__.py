"""Constrained-deblurring experiment harness and CLI."""

from .experiment import (
    CASES,
    DEFAULT_MU,
    MODELS,
    ExperimentConfig,
    SweepRow,
    TrialResult,
    TrialsSummary,
    add_noise,
    background_indices,
    build_constraints,
    build_model,
    build_operators,
    compare,
    make_phantom,
    run_trial,
    run_trials,
    sweep_mu,
)
from .outputs import load_config_file, read_pgm, write_outputs, write_pgm, write_sweep_csv, write_trace_csv
