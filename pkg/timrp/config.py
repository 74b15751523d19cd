"""
Runtime configuration
"""
from dataclasses import dataclass
from typing import Optional

from dotenv import load_dotenv

from .utils import get_env_var

load_dotenv()

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


# ==================== CONFIGURATION ====================
@dataclass
class Config:
    """Run defaults, overridable from the environment (a .env file is honoured)"""

    EPS: float = 1e-6
    GRAD_TOL: float = 1e-6
    MAX_ITER: int = 500
    SEED: int = 0
    MAX_WORKERS: int = 4
    OUTPUT_DIR: str = "outputs"
    LOG_LEVEL: str = "INFO"
    LOG_FILE: Optional[str] = None

    @classmethod
    def from_env(cls) -> "Config":
        """Create Config from environment variables"""
        try:
            return cls(
                EPS=float(get_env_var("TIM_EPS", cls.EPS)),
                GRAD_TOL=float(get_env_var("TIM_GRAD_TOL", cls.GRAD_TOL)),
                MAX_ITER=int(get_env_var("TIM_MAX_ITER", cls.MAX_ITER)),
                SEED=int(get_env_var("TIM_SEED", cls.SEED)),
                MAX_WORKERS=int(get_env_var("MAX_WORKERS", cls.MAX_WORKERS)),
                OUTPUT_DIR=get_env_var("OUTPUT_DIR", cls.OUTPUT_DIR),
                LOG_LEVEL=get_env_var("LOG_LEVEL", cls.LOG_LEVEL).upper(),
                LOG_FILE=get_env_var("LOG_FILE"),
            )
        except ValueError as e:
            raise ValueError(f"Invalid numeric environment variable: {e}") from e

    def __post_init__(self):
        self.LOG_LEVEL = str(self.LOG_LEVEL).upper()

    def validate(self) -> bool:
        """Validate field ranges, naming every offending field"""
        problems = []
        if not self.EPS > 0:
            problems.append(f"EPS={self.EPS}")
        if not self.GRAD_TOL > 0:
            problems.append(f"GRAD_TOL={self.GRAD_TOL}")
        if self.MAX_ITER < 1:
            problems.append(f"MAX_ITER={self.MAX_ITER}")
        if self.MAX_WORKERS < 1:
            problems.append(f"MAX_WORKERS={self.MAX_WORKERS}")
        if self.LOG_LEVEL not in LOG_LEVELS:
            problems.append(f"LOG_LEVEL={self.LOG_LEVEL}")

        if problems:
            raise ValueError(f"Invalid configuration values: {', '.join(problems)}")

        return True
