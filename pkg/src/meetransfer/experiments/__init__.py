from .config import SweepConfig, load_config
from .sweeps import (
    dependence_diagnostic,
    run_dependence,
    run_kernel_size_study,
    run_noise_table,
    run_shift_sweep,
    run_transfer,
)

__all__ = [
    "SweepConfig",
    "dependence_diagnostic",
    "load_config",
    "run_dependence",
    "run_kernel_size_study",
    "run_noise_table",
    "run_shift_sweep",
    "run_transfer",
]
