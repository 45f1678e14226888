"""Causal modeling and corrective-action selection for a pouring task.

Pipeline: simulate a synthetic pouring world, learn the causal graph from
data, fit per-node neural density estimators, answer interventional
queries by Monte Carlo, test token-level actual causation over
contrastive parameter sweeps, and pick alternative action values that
push the spillage probability under a threshold.
"""

__version__ = "0.1.0"

from .graph import Binary, CausalGraph, Continuous, InterventionSet
from .interventions import (DoEstimate, TrainedModel, conditional_probability,
                            do_curve, interventional_probability)
from .nade import Mechanism, TrainConfig, fit
from .actual_causation import AcQuery, AcRegion, ac_test, raising_region
from .selection import SelectionPolicy, SelectionResult, select_alternative, select_for_trial
from .world import Trial, WorldConfig, generate_dataset, replay
from .discovery import CiTest, Tiers, bootstrap, ci_test, pc, stable_graph

__all__ = [
    "AcQuery", "AcRegion", "Binary", "CausalGraph", "CiTest", "Continuous",
    "DoEstimate", "InterventionSet", "Mechanism", "SelectionPolicy",
    "SelectionResult", "Tiers", "TrainConfig", "TrainedModel", "Trial",
    "WorldConfig", "ac_test", "bootstrap", "ci_test",
    "conditional_probability", "do_curve", "fit", "generate_dataset",
    "interventional_probability", "pc", "raising_region", "replay",
    "select_alternative", "select_for_trial", "stable_graph",
]
