"""AODV ad hoc network simulator with black hole attacks and a Merkle-chain forwarding check."""
from .merkle import RouteProof, fold_root, leaf_value, verify_route_proof
from .scenario import ScenarioConfig, parse_scenario
from .simulation import RunResult, Simulation, run_scenario

__all__ = [
    "RouteProof", "fold_root", "leaf_value", "verify_route_proof",
    "ScenarioConfig", "parse_scenario", "RunResult", "Simulation", "run_scenario",
]
__version__ = "0.1.0"
