"""Monte Carlo experiments and their CSV reports."""

from .reporting import ExperimentConfig, Report, ReportMetadata, ReportRow, merge_reports
from .mc_harness import (
    AcceptanceResult,
    MonteCarloHarness,
    run_acceptance_suite,
    run_estimation_experiment,
    run_moment_domination,
    run_risk_experiment,
    run_tail_experiment,
    stream,
)

__all__ = [
    'ExperimentConfig',
    'Report',
    'ReportMetadata',
    'ReportRow',
    'merge_reports',
    'AcceptanceResult',
    'MonteCarloHarness',
    'run_acceptance_suite',
    'run_estimation_experiment',
    'run_moment_domination',
    'run_risk_experiment',
    'run_tail_experiment',
    'stream',
]
