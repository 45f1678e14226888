"""Automatic choice of an alternative action parameter.

Three steps over a computed contrastive region: keep the grid values where
probability raising holds, keep those whose predicted outcome probability
is below the policy threshold, then return the qualifying value closest to
the actual parameter. Short-circuits to "no change needed" when the
full-context reference probability is already below the threshold, and to
"no alternative" when the second step empties the candidate set.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .actual_causation import AcQuery, AcRegion, default_grid, raising_region
from .interventions import TrainedModel
from .world import Trial, trial_context

CLOSEST_TO_ACTUAL = "closest_to_actual"
LOWEST_PROBABILITY = "lowest_probability"

ALTERNATIVE = "alternative"
NO_CHANGE = "no_change"
NONE = "none"

# analysis path per variable: direct for RD, mediated through RV otherwise
DESIGNATED_PATHS = {
    "RD": ("RD", "S"),
    "FU": ("FU", "RV", "S"),
    "RC": ("RC", "RV", "S"),
}


class SelectionError(ValueError):
    pass


class GridMismatch(SelectionError):
    pass


@dataclass(frozen=True)
class SelectionPolicy:
    threshold: float = 0.1
    criterion: str = CLOSEST_TO_ACTUAL

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise SelectionError("threshold must lie strictly between 0 and 1")
        if self.criterion not in (CLOSEST_TO_ACTUAL, LOWEST_PROBABILITY):
            raise SelectionError(f"unknown criterion {self.criterion!r}")


@dataclass(frozen=True)
class SelectionResult:
    kind: str
    value: float | None = None
    predicted_probability: float | None = None
    reference_probability: float | None = None

    @classmethod
    def alternative(cls, value, predicted):
        return cls(ALTERNATIVE, value=float(value),
                   predicted_probability=float(predicted))

    @classmethod
    def no_change(cls, reference):
        return cls(NO_CHANGE, reference_probability=float(reference))

    @classmethod
    def none(cls):
        return cls(NONE)

    def to_dict(self):
        return {"result": self.kind, "value": self.value,
                "predicted_probability": self.predicted_probability,
                "reference_probability": self.reference_probability}


def select_alternative(region: AcRegion, actual: float,
                       policy: SelectionPolicy = SelectionPolicy()) -> SelectionResult:
    """Apply the three-step rule to a computed region."""
    grid = np.asarray(region.grid, dtype=float)
    if not (len(grid) == len(region.rhs) == len(region.raising)):
        raise GridMismatch("region arrays have inconsistent lengths")
    if grid.size == 0:
        raise GridMismatch("region grid is empty")
    if not grid.min() - 1e-9 <= actual <= grid.max() + 1e-9:
        raise GridMismatch(
            f"actual value {actual} lies outside the region grid "
            f"[{grid.min()}, {grid.max()}]")

    reference = region.lhs[region.full_subset_key].probability
    if reference < policy.threshold:
        return SelectionResult.no_change(reference)

    candidates = [(float(v), est.probability)
                  for v, est, flag in zip(grid, region.rhs, region.raising)
                  if flag and est.probability < policy.threshold]
    if not candidates:
        return SelectionResult.none()

    if policy.criterion == CLOSEST_TO_ACTUAL:
        value, prob = min(candidates, key=lambda c: (abs(c[0] - actual), c[0]))
    else:
        value, prob = min(candidates, key=lambda c: (c[1], c[0]))
    return SelectionResult.alternative(value, prob)


def select_for_trial(model: TrainedModel, trial: Trial, variable: str,
                     policy: SelectionPolicy = SelectionPolicy(),
                     grid_points: int = 101, n_samples: int = 10_000,
                     seed: int = 0, region_out: list | None = None) -> SelectionResult:
    """Contrastive sweep plus selection for one recorded trial.

    The variable is analyzed along its designated path (direct for RD,
    mediated through RV for FU and RC). ``region_out``, when given, gets
    the computed AcRegion appended for reporting.
    """
    if variable not in DESIGNATED_PATHS:
        raise SelectionError(f"no designated path for variable {variable!r}")
    query = AcQuery(model=model, cause=variable, outcome="S",
                    path=DESIGNATED_PATHS[variable],
                    context=trial_context(trial),
                    grid=default_grid(model, variable, grid_points),
                    n_samples=n_samples, seed=seed)
    region = raising_region(query)
    if region_out is not None:
        region_out.append(region)
    return select_alternative(region, query.actual_value, policy)


def result_json(result: SelectionResult, variable: str, threshold: float,
                trial_id=None) -> str:
    payload = {"trial_id": trial_id, "variable": variable,
               "result": result.kind, "value": result.value,
               "predicted_probability": result.predicted_probability,
               "threshold": threshold}
    return json.dumps(payload, sort_keys=True)
