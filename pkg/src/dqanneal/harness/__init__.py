from .config import ExperimentConfig
from .runner import RunArtifacts, SweepSummary, compile_or_load, run_classical, run_single, run_sweep

__all__ = [
    "ExperimentConfig",
    "RunArtifacts",
    "SweepSummary",
    "compile_or_load",
    "run_classical",
    "run_single",
    "run_sweep",
]
