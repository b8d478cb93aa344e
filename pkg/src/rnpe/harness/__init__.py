from rnpe.harness.benchmark import RunRecord, run_benchmark, sweep_misspecification
from rnpe.harness.config import PROFILES, BenchmarkConfig, load_config, make_config
from rnpe.harness.report import emit_report

__all__ = [
    "PROFILES",
    "BenchmarkConfig",
    "RunRecord",
    "emit_report",
    "load_config",
    "make_config",
    "run_benchmark",
    "sweep_misspecification",
]
