"""Key conditional quotient filtering with baseline filters and benchmarks."""

from .kcqf import Estimate, KcqfConfig, kcqf_run
from .ssm import SystemModel, Trajectory, growth_model, simulate_truth

__all__ = ["Estimate", "KcqfConfig", "SystemModel", "Trajectory", "growth_model", "kcqf_run", "simulate_truth"]
__version__ = "0.1.0"
