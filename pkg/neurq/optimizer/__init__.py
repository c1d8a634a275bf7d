"""Physical optimization: cost/quality estimation, Pareto search, cache substitution."""

from neurq.optimizer.cost import CostModel, OptimizerContext, estimate
from neurq.optimizer.explain import explain_physical
from neurq.optimizer.physical import CostQuality, Objective, PhysicalOp, parse_objective
from neurq.optimizer.search import choose, enumerate_physical, optimize
from neurq.optimizer.substitute import cache_aware_substitute

__all__ = [
    "CostModel",
    "CostQuality",
    "Objective",
    "OptimizerContext",
    "PhysicalOp",
    "cache_aware_substitute",
    "choose",
    "enumerate_physical",
    "estimate",
    "explain_physical",
    "optimize",
    "parse_objective",
]
