"""
Configuration settings for calmreg.

This module provides configuration management for the library and the
experiment CLI: solver tolerances, Monte Carlo execution settings, the
sampling budget of the condition certificates and the crossover solver
bracket. Every section can be overridden through ``CALMREG_*`` environment
variables (optionally loaded from a ``.env`` file).
"""

import os
from dataclasses import dataclass, asdict
from enum import Enum
from typing import Any, Dict, Optional

from dotenv import load_dotenv

from calmreg.exceptions import ConfigError


class NoiseKind(Enum):
    """Standardized noise generators available to experiments."""
    GAUSSIAN = "gaussian"
    RADEMACHER_SCALED = "rademacher_scaled"
    UNIFORM_SCALED = "uniform_scaled"


class ExperimentKind(Enum):
    """Monte Carlo experiment families."""
    TAIL_UPPER = "tail_upper"
    TAIL_LOWER = "tail_lower"
    TAIL_EXP_REGIME = "tail_exp_regime"
    ESTIMATION = "estimation"
    RISK = "risk"


def _env_int(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw == "":
        return default
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"{name}={raw!r} is not an integer") from exc


def _env_float(name: str, default: float) -> float:
    raw = os.getenv(name)
    if raw is None or raw == "":
        return default
    try:
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{name}={raw!r} is not a number") from exc


@dataclass
class SolverConfig:
    """Gauss-Newton profile solver settings."""
    tol: float = 1e-10
    max_iter: int = 200
    backtrack_factor: float = 0.5
    armijo_c1: float = 1e-4
    max_backtracks: int = 60

    @classmethod
    def from_env(cls) -> 'SolverConfig':
        """Create SolverConfig from environment variables."""
        return cls(
            tol=_env_float("CALMREG_SOLVER_TOL", 1e-10),
            max_iter=_env_int("CALMREG_SOLVER_MAX_ITER", 200),
        )


@dataclass
class MonteCarloConfig:
    """Execution settings for the Monte Carlo harness."""
    threads: int = 1
    block_size: int = 4096
    seed: int = 0

    @classmethod
    def from_env(cls) -> 'MonteCarloConfig':
        """Create MonteCarloConfig from environment variables."""
        threads = _env_int("CALMREG_THREADS", os.cpu_count() or 1)
        if threads < 1:
            raise ConfigError(f"CALMREG_THREADS must be positive, got {threads}")
        block_size = _env_int("CALMREG_BLOCK_SIZE", 4096)
        if block_size < 1:
            raise ConfigError(f"CALMREG_BLOCK_SIZE must be positive, got {block_size}")
        return cls(
            threads=threads,
            block_size=block_size,
            seed=_env_int("CALMREG_SEED", 0),
        )


@dataclass
class ConditionCheckConfig:
    """Sampling budget of the local regularity certificates."""
    theta_samples: int = 200
    directions: int = 50
    c_ring: float = 1.0
    nu: float = 2.0 / 3.0

    @classmethod
    def from_env(cls) -> 'ConditionCheckConfig':
        """Create ConditionCheckConfig from environment variables."""
        return cls(
            theta_samples=_env_int("CALMREG_THETA_SAMPLES", 200),
            directions=_env_int("CALMREG_DIRECTIONS", 50),
            c_ring=_env_float("CALMREG_C_RING", 1.0),
        )


@dataclass
class BisectionConfig:
    """Crossover-level solver settings."""
    xc_tol: float = 1e-8
    max_iter: int = 200
    bracket_lo: float = 1e-6
    bracket_hi: float = 1e8


class CalmregConfig:
    """Main configuration class for calmreg."""

    def __init__(self):
        self.solver = SolverConfig.from_env()
        self.monte_carlo = MonteCarloConfig.from_env()
        self.conditions = ConditionCheckConfig.from_env()
        self.bisection = BisectionConfig()

    def to_dict(self) -> Dict[str, Any]:
        """Convert configuration to dictionary for serialization."""
        return {
            "solver": asdict(self.solver),
            "monte_carlo": asdict(self.monte_carlo),
            "conditions": asdict(self.conditions),
            "bisection": asdict(self.bisection),
        }


# Global configuration instance
_config: Optional[CalmregConfig] = None


def get_config() -> CalmregConfig:
    """Get the global configuration instance."""
    global _config
    if _config is None:
        load_dotenv()
        _config = CalmregConfig()
    return _config


def reset_config() -> None:
    """Drop the cached configuration so the next access re-reads the environment."""
    global _config
    _config = None


__all__ = [
    'NoiseKind',
    'ExperimentKind',
    'SolverConfig',
    'MonteCarloConfig',
    'ConditionCheckConfig',
    'BisectionConfig',
    'CalmregConfig',
    'get_config',
    'reset_config',
]
