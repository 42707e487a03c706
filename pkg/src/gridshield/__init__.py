"""False-data-injection attacks and defenses for DC state estimation."""

from .attack import AttackPlan, NotAttackable, bridging_attack, min_cut_attack
from .dc import build_jacobian, wls_estimate
from .defense import DefensePlan, Undefendable, augment, mixed_defense, steiner_cti
from .grid import Case, CostModel, MeasurementPlacement, Meter, PowerNetwork, generate_case, load_case
from .observability import find_emst, measured_graph, vertex_types
from .tph import tph_defense, tph_run
from .verify import enum_min_defense, verify_plan

__version__ = "0.1.0"

__all__ = [
    "AttackPlan", "Case", "CostModel", "DefensePlan", "MeasurementPlacement", "Meter",
    "NotAttackable", "PowerNetwork", "Undefendable", "augment", "bridging_attack",
    "build_jacobian", "enum_min_defense", "find_emst", "generate_case", "load_case",
    "measured_graph", "min_cut_attack", "mixed_defense", "steiner_cti", "tph_defense",
    "tph_run", "verify_plan", "vertex_types", "wls_estimate",
]
