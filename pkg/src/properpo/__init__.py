"""Proper losses, choice-structure checks and preference-optimization objectives."""

from . import catalog
from .constructors import (POTENTIALS, EligiblePotential, composite_build, composite_decompose,
                           phi_po_build, phi_po_multiclass, phi_po_symmetrize)
from .klst import ChoiceTable, btl_table, fit_representation, generate_from_model, verify_klst
from .pipeline import (PipelineSpec, catalog_spec, dpo_spec, length_normalize, objective,
                       objective_and_grad, oracle_length_solution, phi_po_spec, pmpo_spec,
                       pppo_spec, recover_reward_diffs, solve_step1, spec_from_dict)
from .proper_loss import (BinaryLoss, ConvexPotential, MulticlassLoss, check_F_condition,
                          check_proper, check_separability_implies_log, margin_transform,
                          one_vs_rest_lift)
from .trainer import SyntheticTask, TabularPolicy, evaluate, generate, train

__all__ = [
    "catalog", "POTENTIALS", "EligiblePotential", "composite_build", "composite_decompose",
    "phi_po_build", "phi_po_multiclass", "phi_po_symmetrize", "ChoiceTable", "btl_table",
    "fit_representation", "generate_from_model", "verify_klst", "PipelineSpec", "catalog_spec",
    "dpo_spec", "length_normalize", "objective", "objective_and_grad", "oracle_length_solution",
    "phi_po_spec", "pmpo_spec", "pppo_spec", "recover_reward_diffs", "solve_step1",
    "spec_from_dict", "BinaryLoss", "ConvexPotential", "MulticlassLoss", "check_F_condition",
    "check_proper", "check_separability_implies_log", "margin_transform", "one_vs_rest_lift",
    "SyntheticTask", "TabularPolicy", "evaluate", "generate", "train",
]
