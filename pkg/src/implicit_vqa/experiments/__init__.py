"""End-to-end pipelines: susceptibility sweep, classifier hyperparameter search and entanglement maximization."""

from .results import (
    EntanglementResult,
    EntanglementStep,
    HyperoptResult,
    HyperoptStep,
    SusceptibilityResult,
    emit_results,
    render,
)
from .entanglement import run_entanglement
from .hyperopt import run_hyperopt
from .susceptibility import run_susceptibility

__all__ = [
    "EntanglementResult",
    "EntanglementStep",
    "HyperoptResult",
    "HyperoptStep",
    "SusceptibilityResult",
    "emit_results",
    "render",
    "run_entanglement",
    "run_hyperopt",
    "run_susceptibility",
]
