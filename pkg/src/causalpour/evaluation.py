"""End-to-end evaluation of corrective-action selection on held-out trials.

Four measurements against a test dataset drawn from the synthetic world:

* outcome prediction - the model's conditional spillage probability at the
  observed parents, thresholded at 0.5, against the recorded outcome;
* coverage - the fraction of spillage trials for which the contrastive
  analysis finds an alternative value per variable at the policy
  threshold;
* corrective success - each covered spillage trial is re-run once in the
  world with the alternative substituted;
* replication histogram - a random subset of covered spillage trials is
  re-run several times to get per-trial empirical success rates.
"""

from __future__ import annotations

import csv
import json

import numpy as np

from .interventions import TrainedModel
from .selection import ALTERNATIVE, SelectionPolicy, select_for_trial
from .world import NODE_TO_COLUMN, DEFAULT_CONFIG, WorldConfig, replay, trial_columns

EVAL_VARIABLES = ("RD", "FU", "RC")
REPLAY_VARIABLES = ("RD", "FU")


class EvaluationError(ValueError):
    pass


def predict_outcomes(model: TrainedModel, trials) -> np.ndarray:
    """P(S | observed parents) per trial, in one vectorized pass."""
    cols = trial_columns(trials)
    mech = model.mechanisms["S"]
    inputs = np.column_stack([cols[p] for p in mech.parents])
    return np.asarray(mech.forward(inputs))


def confusion_at_half(model: TrainedModel, trials) -> dict:
    probs = predict_outcomes(model, trials)
    actual = np.array([t.spillage for t in trials])
    predicted = probs >= 0.5
    tp = int(np.sum(predicted & actual))
    fn = int(np.sum(~predicted & actual))
    tn = int(np.sum(~predicted & ~actual))
    fp = int(np.sum(predicted & ~actual))
    return {
        "tp": tp, "fn": fn, "tn": tn, "fp": fp,
        "tpr": tp / max(tp + fn, 1),
        "tnr": tn / max(tn + fp, 1),
    }


def evaluate_model(model: TrainedModel, trials, threshold: float = 0.1,
                   replications: int = 10, hist_trials: int = 100,
                   n_samples: int = 2000, seed: int = 0,
                   grid_points: int = 101,
                   world_config: WorldConfig = DEFAULT_CONFIG) -> dict:
    """Full evaluation report as a JSON-ready dict."""
    if not trials:
        raise EvaluationError("empty test dataset")
    policy = SelectionPolicy(threshold=threshold)
    spillage = [t for t in trials if t.spillage]
    report: dict = {
        "n_test": len(trials),
        "n_spillage": len(spillage),
        "threshold": threshold,
        "n_samples": n_samples,
        "replications": replications,
        "seed": seed,
        "confusion": confusion_at_half(model, trials),
    }
    if not spillage:
        report["coverage"] = {v: 0.0 for v in EVAL_VARIABLES}
        report["replay_success"] = {}
        report["replication_rates"] = {}
        return report

    # sub-seeds: one stream per purpose so adding measurements later does
    # not reshuffle earlier ones
    seed_arr = np.random.SeedSequence(seed).generate_state(4)
    replay_base = int(seed_arr[1])
    hist_base = int(seed_arr[2])
    subset_rng = np.random.default_rng(int(seed_arr[3]))

    alternatives: dict[str, dict[int, float]] = {v: {} for v in EVAL_VARIABLES}
    for i, trial in enumerate(spillage):
        for var in EVAL_VARIABLES:
            result = select_for_trial(model, trial, var, policy,
                                      grid_points=grid_points,
                                      n_samples=n_samples, seed=seed)
            if result.kind == ALTERNATIVE:
                alternatives[var][i] = result.value
    report["coverage"] = {v: len(alternatives[v]) / len(spillage)
                          for v in EVAL_VARIABLES}

    replay_success = {}
    for var in REPLAY_VARIABLES:
        covered = alternatives[var]
        if not covered:
            continue
        successes = 0
        for i, value in covered.items():
            successes += replay(spillage[i], {NODE_TO_COLUMN[var]: value}, 1,
                                replay_base + i, world_config)
        replay_success[var] = successes / len(covered)
    report["replay_success"] = replay_success

    replication_rates: dict[str, list[float]] = {}
    for var in REPLAY_VARIABLES:
        covered = sorted(alternatives[var])
        if not covered or replications < 1:
            continue
        take = min(hist_trials, len(covered))
        chosen = sorted(subset_rng.choice(len(covered), size=take, replace=False))
        rates = []
        for j in chosen:
            i = covered[j]
            wins = replay(spillage[i], {NODE_TO_COLUMN[var]: alternatives[var][i]},
                          replications, hist_base + i, world_config)
            rates.append(wins / replications)
        replication_rates[var] = rates
    report["replication_rates"] = replication_rates
    return report


def save_report(report: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")


def save_rate_histogram(rates, path, bins=10) -> None:
    """Bin per-trial success rates into a plottable CSV."""
    edges = np.linspace(0.0, 1.0, bins + 1)
    counts, _ = np.histogram(np.asarray(rates, dtype=float),
                             bins=edges.size - 1, range=(0.0, 1.0))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_lo", "bin_hi", "count"])
        for lo, hi, c in zip(edges[:-1], edges[1:], counts):
            writer.writerow([repr(float(lo)), repr(float(hi)), int(c)])
