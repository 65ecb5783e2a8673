"""Configuration settings for the DPRP toolkit."""

from typing import Dict, List
from pydantic import Field
from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    """Application settings, overridable through DPRP_* environment variables."""

    # Logging
    log: str = Field(default="INFO", description="Log level (env DPRP_LOG)")

    # Run defaults
    output_dir: str = Field(default="data/outputs")
    default_seed: int = Field(default=0, ge=0, lt=2**64)
    jobs: int = Field(default=1, ge=1)

    # Privacy defaults (beta=1 and delta=1e-6 throughout the experiments)
    default_beta: float = Field(default=1.0, gt=0)
    default_delta: float = Field(default=1e-6, ge=0, lt=1)
    default_repetitions: int = Field(default=1, ge=1)

    # Numerics
    quadrature_tolerance: float = Field(default=1e-8, gt=0)
    sigma_residual_tolerance: float = Field(default=1e-12, gt=0)
    sigma_max_iterations: int = Field(default=200, ge=10)

    # Evaluation
    gold_standard_size: int = Field(default=50, ge=1)
    audit_tolerance: float = Field(default=1e-9, ge=0)
    audit_grid_points: int = Field(default=21, ge=2)
    oracle_min_samples: int = Field(default=100, ge=1)

    model_config = {
        "env_prefix": "DPRP_",
        "env_file": ".env",
        "env_file_encoding": "utf-8",
        "extra": "ignore"
    }


TOOL_NAME = "dprp"

# Mechanism catalog, keyed by family
DP_RP_VARIANTS: List[str] = ["raw_g_opt", "rp_g", "rp_g_opt", "rp_l", "rp_g_opt_b", "oporp"]
SIGN_VARIANTS: List[str] = ["rr", "rr_smooth", "oporp_rr", "oporp_rr_smooth"]
IDP_VARIANTS: List[str] = ["g", "rr"]
BASELINE_VARIANTS: List[str] = ["rp_plain", "signrp_plain"]

MECHANISM_FAMILIES: Dict[str, List[str]] = {
    "dp_rp": DP_RP_VARIANTS,
    "sign": SIGN_VARIANTS,
    "idp": IDP_VARIANTS,
    "baseline": BASELINE_VARIANTS,
}

# Grids used by the calibrate subcommand and the acceptance suites
EPSILON_GRID: List[float] = [0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0]
DELTA_GRID: List[float] = [1e-6, 1e-3]
SENSITIVITY_GRID: List[float] = [0.5, 1.0, 2.0]

# Retrieval protocol
R_GRID: List[int] = [1, 5, 10, 20, 50, 100, 200]

# Synthetic benchmark data
SYNTHETIC_DEFAULTS: Dict[str, object] = {
    "n_database": 2000,
    "n_queries": 200,
    "p": 256,
    "norms": [1.0, 5.0, 10.0],
    "n_classes": 10,
}

# Mechanism fields for the ordering comparisons on the synthetic task. DP-SignOPORP
# runs t=4 repetitions of k/t bins, so each bin sums p*t/k = 16 coordinates at p=256
# and L_j > 1 is common for the norm-5 and norm-10 rows.
ORDERING_BENCHMARK: Dict[str, Dict[str, object]] = {
    "dp_rp:rp_g": {"family": "dp_rp", "variant": "rp_g", "k": 256},
    "dp_rp:rp_g_opt": {"family": "dp_rp", "variant": "rp_g_opt", "k": 256},
    "dp_rp:rp_g_opt_b": {"family": "dp_rp", "variant": "rp_g_opt_b", "k": 256},
    "sign:oporp_rr": {"family": "sign", "variant": "oporp_rr", "k": 64, "repetitions": 4},
    "sign:oporp_rr_smooth": {"family": "sign", "variant": "oporp_rr_smooth", "k": 64, "repetitions": 4},
    "idp:rr": {"family": "idp", "variant": "rr", "k": 256},
    "baseline:signrp_plain": {"family": "baseline", "variant": "signrp_plain", "k": 256},
}
ORDERING_EPSILONS: List[float] = [5.0, 10.0, 20.0]
ORDERING_SEEDS = 10

# Binary formats
MATRIX_MAGIC_F64 = b"DPRPMAT1"
MATRIX_MAGIC_F32 = b"DPRPMAS1"
SIGN_MAGIC = b"DPRPSGN1"

settings = Settings()
