"""Popularity ratio maximization under PA-IC dynamics."""

from .graph import (GraphError, InfluenceGraph, apply_weighted_cascade, from_edges,
                    load_edge_list, reverse_view)
from .paic import (ModelError, RoundWeights, ScenarioConfig, SeedAllocation, evaluate_allocation,
                   pa_step, ratio_oi_closed_form, ratio_via_iteration, round_weights,
                   surrogate_rho_oi)
from .rng import RngStream
from .rr import RRCollection, rho_hat, rho_hat_ni
from .selection import ImmParams, imm_single_round, prm_imm, prm_imm_nios, prm_imm_oins

__version__ = "0.1.0"
