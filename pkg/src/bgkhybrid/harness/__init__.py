from .metrics import l1_error, restrict
from .runner import RunConfig, RunReport, bench, coerce_config, compute_reference, parse_sweep, run
from .scenarios import SCENARIOS, Scenario, build_scenario

__all__ = [
    "RunConfig", "RunReport", "Scenario", "SCENARIOS", "bench", "build_scenario", "coerce_config",
    "compute_reference", "l1_error", "parse_sweep", "restrict", "run",
]
