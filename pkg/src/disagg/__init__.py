"""Privacy-preserving disaggregation of aggregate allocations into agent profiles."""

from .apm import ApmResult, run_apm
from .cuts import HoffmanCut, LambdaCut, hoffman_feasible
from .master import FeasibleRegion, MicrogridMaster, QuadraticMaster
from .model import MicrogridSpec, QuadraticCost, TransportInstance, toy_instance
from .polyhedral import PolyAgent, optimal_disaggregation_poly, transport_as_poly
from .protocol import RunReport, optimal_disaggregation, privacy_audit

__all__ = [
    "ApmResult", "FeasibleRegion", "HoffmanCut", "LambdaCut", "MicrogridMaster", "MicrogridSpec", "PolyAgent",
    "QuadraticCost", "QuadraticMaster", "RunReport", "TransportInstance", "hoffman_feasible",
    "optimal_disaggregation", "optimal_disaggregation_poly", "privacy_audit", "run_apm", "toy_instance",
    "transport_as_poly",
]
