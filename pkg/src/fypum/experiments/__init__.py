from .config import ConfigError, derive_seed, load_config
from .harness import (run_convergence, run_monte_carlo, run_scaling_validation, run_subsample_benchmark)
from .report import ExperimentReport, read_report_rows

__all__ = ["ConfigError", "derive_seed", "load_config", "run_convergence", "run_monte_carlo",
           "run_scaling_validation", "run_subsample_benchmark", "ExperimentReport", "read_report_rows"]
