"""Equal-norm microstate expansions, counted probabilities and EPRB locality checks."""

from .distributions import OUTCOMES, Conditional, JointDistribution, conditional, marginals
from .eprb import (
    Backend,
    CHSHResult,
    ConditionReport,
    EPRBScenario,
    chsh,
    condition_battery,
    correlation,
    joint_distribution,
    photon_box_scenario,
    product_completeness_demo,
    singlet,
)
from .errors import (
    ContainmentError,
    ContextError,
    DimensionError,
    ExpansionError,
    MicrocountError,
    RankError,
    ScenarioError,
    SchmidtRankError,
    UnverifiedExpansionError,
    ZeroStateError,
)
from .expansion import (
    AdaptedExpansion,
    BranchExpansion,
    Classification,
    Expansion,
    adapted_expand,
    equiamplitude_expand,
    product_adapted_expand,
    verify_expansion,
)
from .hidden_variable import (
    EmpiricalJoint,
    LambdaOne,
    LocalBaseline,
    exact_average,
    local_baseline,
    monte_carlo,
)
from .lambda_many import ImpreciseProbability, born_quantity, containment_check, probability_bounds
from .linalg import Projector, StateVector, SubspaceProjector, Unitary, spin_projector

__all__ = [
    "adapted_expand",
    "AdaptedExpansion",
    "Backend",
    "born_quantity",
    "BranchExpansion",
    "chsh",
    "CHSHResult",
    "Classification",
    "condition_battery",
    "Conditional",
    "conditional",
    "ConditionReport",
    "containment_check",
    "ContainmentError",
    "ContextError",
    "correlation",
    "DimensionError",
    "EmpiricalJoint",
    "EPRBScenario",
    "equiamplitude_expand",
    "exact_average",
    "Expansion",
    "ExpansionError",
    "ImpreciseProbability",
    "joint_distribution",
    "JointDistribution",
    "LambdaOne",
    "local_baseline",
    "LocalBaseline",
    "marginals",
    "MicrocountError",
    "monte_carlo",
    "OUTCOMES",
    "photon_box_scenario",
    "probability_bounds",
    "product_adapted_expand",
    "product_completeness_demo",
    "Projector",
    "RankError",
    "ScenarioError",
    "SchmidtRankError",
    "singlet",
    "spin_projector",
    "StateVector",
    "SubspaceProjector",
    "Unitary",
    "UnverifiedExpansionError",
    "verify_expansion",
    "ZeroStateError",
]
