import numpy as np
import pytest

from causalpour.actual_causation import AcRegion
from causalpour.interventions import DoEstimate
from causalpour.selection import (ALTERNATIVE, GridMismatch, NO_CHANGE, NONE,
                                  SelectionError, SelectionPolicy,
                                  select_alternative, select_for_trial)
from causalpour.world import Trial


def make_region(grid, rhs_probs, raising, reference, mediators=()):
    """Synthetic region; reference is the full-subset value."""
    grid = np.asarray(grid, dtype=float)
    rhs = [DoEstimate(p, 0.01, 1000, 0) for p in rhs_probs]
    lhs = {"": DoEstimate(max(reference, 0.0), 0.01, 1000, 0)}
    key = ",".join(sorted(mediators))
    lhs[key] = DoEstimate(reference, 0.01, 1000, 0)
    return AcRegion(cause="RD", outcome="S", path=("RD", "S"),
                    mediators=tuple(sorted(mediators)), context={"RD": 0.7},
                    grid=grid, rhs=rhs, lhs=lhs, raising=list(raising))


GRID = np.linspace(0.5, 1.5, 11)
# probabilities fall off with the grid: raising past the actual value
RHS = [0.9, 0.85, 0.8, 0.6, 0.3, 0.15, 0.08, 0.05, 0.04, 0.03, 0.03]
RAISING = [False, False, False, True, True, True, True, True, True, True, True]


def test_closest_qualifying_value_is_selected():
    region = make_region(GRID, RHS, RAISING, reference=0.8)
    result = select_alternative(region, actual=0.7, policy=SelectionPolicy(0.1))
    assert result.kind == ALTERNATIVE
    # qualifying points start at grid[6] = 1.1; closest to 0.7 is 1.1
    assert result.value == pytest.approx(1.1)
    assert result.predicted_probability == pytest.approx(0.08)


def test_threshold_widens_candidate_set():
    region = make_region(GRID, RHS, RAISING, reference=0.8)
    loose = select_alternative(region, 0.7, SelectionPolicy(0.35))
    assert loose.value == pytest.approx(0.9)  # grid[4] = 0.9 at p=0.3
    tight = select_alternative(region, 0.7, SelectionPolicy(0.05))
    assert tight.value == pytest.approx(1.3)


def test_monotone_in_threshold():
    region = make_region(GRID, RHS, RAISING, reference=0.8)
    for t in (0.05, 0.1, 0.2, 0.35):
        if select_alternative(region, 0.7, SelectionPolicy(t)).kind == ALTERNATIVE:
            for t2 in (0.4, 0.6, 0.9):
                if t2 > t:
                    later = select_alternative(region, 0.7, SelectionPolicy(t2))
                    assert later.kind in (ALTERNATIVE, NO_CHANGE)


def test_alternative_satisfies_both_conditions():
    region = make_region(GRID, RHS, RAISING, reference=0.8)
    result = select_alternative(region, 0.7, SelectionPolicy(0.1))
    i = int(np.argmin(np.abs(region.grid - result.value)))
    assert region.raising[i]
    assert region.rhs[i].probability < 0.1
    assert result.predicted_probability < 0.1


def test_closest_tie_breaks_to_smaller_value():
    grid = [0.6, 0.8, 1.0, 1.2, 1.4]
    rhs = [0.05, 0.05, 0.9, 0.05, 0.05]
    raising = [True, True, False, True, True]
    region = make_region(grid, rhs, raising, reference=0.8)
    result = select_alternative(region, 1.0, SelectionPolicy(0.1))
    assert result.value == pytest.approx(0.8)  # 0.8 and 1.2 tie; smaller wins


def test_lowest_probability_criterion():
    region = make_region(GRID, RHS, RAISING, reference=0.8)
    policy = SelectionPolicy(0.1, criterion="lowest_probability")
    result = select_alternative(region, 0.7, policy)
    assert result.predicted_probability == pytest.approx(0.03)
    assert result.value == pytest.approx(1.4)  # tie at 0.03; smaller value


def test_no_change_short_circuit():
    region = make_region(GRID, RHS, RAISING, reference=0.05)
    result = select_alternative(region, 0.7, SelectionPolicy(0.1))
    assert result.kind == NO_CHANGE
    assert result.reference_probability == pytest.approx(0.05)


def test_no_alternative_when_nothing_qualifies():
    rhs_high = [0.9] * len(GRID)
    raising = [True] * len(GRID)
    region = make_region(GRID, rhs_high, raising, reference=0.95)
    result = select_alternative(region, 0.7, SelectionPolicy(0.2))
    assert result.kind == NONE


def test_raising_gate_excludes_low_points():
    # low probabilities outside the raising region must not be selected
    rhs = [0.01] + [0.5] * 9 + [0.04]
    raising = [False] + [True] * 10
    region = make_region(GRID, rhs, raising, reference=0.8)
    result = select_alternative(region, 0.7, SelectionPolicy(0.1))
    assert result.value == pytest.approx(1.5)


def test_grid_mismatch_detected():
    region = make_region(GRID, RHS, RAISING, reference=0.8)
    with pytest.raises(GridMismatch):
        select_alternative(region, actual=2.5, policy=SelectionPolicy(0.1))
    region.rhs = region.rhs[:-1]
    with pytest.raises(GridMismatch):
        select_alternative(region, actual=0.7, policy=SelectionPolicy(0.1))


def test_policy_validation():
    with pytest.raises(SelectionError):
        SelectionPolicy(threshold=0.0)
    with pytest.raises(SelectionError):
        SelectionPolicy(threshold=1.0)
    with pytest.raises(SelectionError):
        SelectionPolicy(criterion="fastest")


# -- per-trial composition -----------------------------------------------------

def test_spillage_trial_gets_in_support_alternative(toy_pouring_model):
    trial = Trial(rc=0.70, fu=0.51, rd=0.70, rv=0.729, spillage=True)
    regions = []
    result = select_for_trial(toy_pouring_model, trial, "RD",
                              SelectionPolicy(0.2), n_samples=2000, seed=3,
                              region_out=regions)
    assert result.kind == ALTERNATIVE
    assert 0.5 <= result.value <= 1.5
    assert result.predicted_probability < 0.2
    # re-estimate the selected point with a fresh seed: must agree within noise
    region, = regions
    i = int(np.argmin(np.abs(region.grid - result.value)))
    from causalpour.interventions import interventional_probability
    do = {"RC": trial.rc, "FU": trial.fu, "RV": trial.rv, "RD": result.value}
    fresh = interventional_probability(toy_pouring_model, "S", do, 4000, seed=777)
    tol = 3 * max(region.rhs[i].std_error + fresh.std_error, 1e-3)
    assert abs(fresh.probability - result.predicted_probability) <= tol


def test_non_spillage_trial_needs_no_change(toy_pouring_model):
    trial = Trial(rc=1.2, fu=0.45, rd=1.3, rv=0.38, spillage=False)
    result = select_for_trial(toy_pouring_model, trial, "RD",
                              SelectionPolicy(0.3), n_samples=1000, seed=3)
    assert result.kind == NO_CHANGE


def test_saturated_outcome_has_no_alternative(toy_pouring_model):
    # overfull regime: the toy response stays high over the whole rim sweep
    trial = Trial(rc=0.55, fu=1.0, rd=1.0, rv=1.82, spillage=True)
    result = select_for_trial(toy_pouring_model, trial, "RD",
                              SelectionPolicy(0.1), n_samples=1000, seed=3)
    assert result.kind == NONE


def test_unknown_variable_rejected(toy_pouring_model):
    trial = Trial(rc=1.0, fu=0.5, rd=1.0, rv=0.5, spillage=False)
    with pytest.raises(SelectionError):
        select_for_trial(toy_pouring_model, trial, "RV", SelectionPolicy(0.1))
