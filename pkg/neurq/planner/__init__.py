"""Logical planning: lowering, rewrites, fingerprints and explain."""

from neurq.planner.explain import explain
from neurq.planner.fingerprint import PlanFingerprint, fingerprint, pin
from neurq.planner.lower import lower
from neurq.planner.rewrites import RewriteResult, apply_rewrites

__all__ = [
    "PlanFingerprint",
    "RewriteResult",
    "apply_rewrites",
    "explain",
    "fingerprint",
    "lower",
    "pin",
]
