"""Interventional queries on a trained model by mutilated-graph sampling.

``P(outcome | do(assignments))`` is estimated by traversing the graph in
topological order: intervened nodes are pinned to their assigned values
(incoming edges effectively severed), every other non-outcome node is
sampled from its mechanism, and the binary outcome itself is never
sampled - the estimate averages the outcome mechanism's head probability,
which strictly reduces variance. When the intervention pins every parent
of the outcome the integrand is constant and the query collapses to a
single forward pass.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .graph import Binary, CausalGraph, Continuous, InvalidIntervention, UnknownNode
from .nade import GAUSSIAN, Mechanism

DEFAULT_SAMPLES = 10_000
TRUNCATION_ROUNDS = 100

CURVE_HEADER = ["value", "probability", "std_error", "n_samples", "seed"]


class InterventionError(ValueError):
    pass


class OutcomeNotBinary(InterventionError):
    pass


class MissingParent(InterventionError):
    pass


@dataclass(frozen=True)
class DoEstimate:
    """Monte Carlo estimate of an interventional probability."""

    probability: float
    std_error: float
    n_samples: int
    seed: int

    def to_dict(self):
        return {"probability": self.probability, "std_error": self.std_error,
                "n_samples": self.n_samples, "seed": self.seed}

    @classmethod
    def from_dict(cls, d):
        return cls(d["probability"], d["std_error"], d["n_samples"], d["seed"])


class TrainedModel:
    """A causal graph plus one mechanism per node (the factorized joint)."""

    def __init__(self, graph: CausalGraph, mechanisms: dict[str, Mechanism]):
        graph.validate()
        self.graph = graph
        self.mechanisms = dict(mechanisms)
        for name in graph.node_names:
            mech = self.mechanisms.get(name)
            if mech is None:
                raise InterventionError(f"no mechanism for node {name!r}")
            if mech.parents != graph.parents(name):
                raise InterventionError(
                    f"mechanism for {name!r} was trained with parents "
                    f"{mech.parents}, graph says {graph.parents(name)}")
        extra = set(self.mechanisms) - set(graph.node_names)
        if extra:
            raise InterventionError(f"mechanisms for unknown nodes {sorted(extra)}")

    def to_dict(self) -> dict:
        return {"graph": self.graph.to_dict(),
                "mechanisms": {n: m.to_dict() for n, m in self.mechanisms.items()}}

    @classmethod
    def from_dict(cls, payload: dict) -> "TrainedModel":
        graph = CausalGraph.from_dict(payload["graph"])
        mechs = {n: Mechanism.from_dict(d) for n, d in payload["mechanisms"].items()}
        return cls(graph, mechs)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "TrainedModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _check_query(model, outcome, do):
    if not isinstance(model.graph.kind(outcome), Binary):
        raise OutcomeNotBinary(f"outcome {outcome!r} is not binary")
    for name, value in do.items():
        kind = model.graph.kinds.get(name)
        if kind is None:
            raise InvalidIntervention(f"cannot intervene on unknown node {name!r}")
        if name == outcome:
            raise InvalidIntervention("the outcome may not be intervened on")
        if not kind.contains(value):
            raise InvalidIntervention(
                f"value {value!r} outside the support of node {name!r}")


def sampling_plan(model: TrainedModel, outcome: str, do):
    """Which nodes a query pins and which it samples, in traversal order."""
    _check_query(model, outcome, do)
    order = model.graph.topological_order()
    fixed = tuple(n for n in order if n in do)
    sampled = tuple(n for n in order if n != outcome and n not in do)
    return fixed, sampled


def _sample_node(mech, kind, inputs, rng):
    """Draw one value per row, truncated to the node support for continuous
    nodes by rejection (bounded rounds, then clamping)."""
    if mech.head != GAUSSIAN:
        p = mech.forward(inputs)
        return (rng.random(len(p)) < p).astype(float)
    mu, sigma = mech.forward(inputs)
    draw = rng.normal(mu, sigma)
    if not isinstance(kind, Continuous):
        return draw
    lo, hi = kind.support
    bad = (draw < lo) | (draw > hi)
    for _ in range(TRUNCATION_ROUNDS):
        if not bad.any():
            break
        draw[bad] = rng.normal(mu[bad], sigma[bad])
        bad = (draw < lo) | (draw > hi)
    return np.clip(draw, lo, hi)


def interventional_probability(model: TrainedModel, outcome: str, do,
                               n_samples: int = DEFAULT_SAMPLES,
                               seed: int = 0) -> DoEstimate:
    """Estimate P(outcome=true | do(assignments)).

    Deterministic for a given seed. ``do`` maps node names to values and
    must not include the outcome. Raises OutcomeNotBinary or
    InvalidIntervention on bad queries.
    """
    _check_query(model, outcome, do)
    if n_samples < 1:
        raise InterventionError("n_samples must be >= 1")
    out_mech = model.mechanisms[outcome]
    out_parents = model.graph.parents(outcome)

    if all(p in do for p in out_parents):
        # integrand is constant: Monte Carlo would average n identical values
        prob = conditional_probability(model, outcome,
                                       {p: do[p] for p in out_parents})
        return DoEstimate(prob, 0.0, n_samples, seed)

    rng = np.random.default_rng(seed)
    values: dict[str, np.ndarray] = {}
    for node in model.graph.topological_order():
        if node == outcome:
            continue
        if node in do:
            values[node] = np.full(n_samples, float(do[node]))
            continue
        mech = model.mechanisms[node]
        inputs = _stack_inputs(mech, values, n_samples)
        values[node] = _sample_node(mech, model.graph.kind(node), inputs, rng)

    probs = out_mech.forward(_stack_inputs(out_mech, values, n_samples))
    std = float(np.std(probs, ddof=1)) if n_samples > 1 else 0.0
    return DoEstimate(float(np.mean(probs)), std / math.sqrt(n_samples),
                      n_samples, seed)


def _stack_inputs(mech, values, n):
    if not mech.parents:
        return np.ones((n, 1))
    return np.column_stack([values[p] for p in mech.parents])


def conditional_probability(model: TrainedModel, outcome: str, assignment) -> float:
    """P(outcome=true | parents) from a single forward pass.

    ``assignment`` must cover exactly the parents of the outcome.
    """
    if not isinstance(model.graph.kind(outcome), Binary):
        raise OutcomeNotBinary(f"outcome {outcome!r} is not binary")
    parents = model.graph.parents(outcome)
    missing = [p for p in parents if p not in assignment]
    if missing:
        raise MissingParent(f"assignment lacks parents {missing}")
    extra = set(assignment) - set(parents)
    if extra:
        raise MissingParent(f"assignment has non-parent keys {sorted(extra)}")
    row = np.array([float(assignment[p]) for p in parents])
    return float(model.mechanisms[outcome].forward(row))


def do_curve(model: TrainedModel, outcome: str, sweep, context=None,
             n_samples: int = DEFAULT_SAMPLES, seed: int = 0):
    """One interventional estimate per grid value of the swept node.

    ``sweep`` is ``(node, iterable of values)``; ``context`` is an extra
    intervention applied at every point. The same seed is reused across
    grid points (common random numbers), which smooths the curve without
    biasing any single point.
    """
    node, grid = sweep
    context = dict(context or {})
    if node in context:
        raise InvalidIntervention(f"sweep node {node!r} also appears in context")
    out = []
    for value in grid:
        do = dict(context)
        do[node] = float(value)
        out.append((float(value),
                    interventional_probability(model, outcome, do, n_samples, seed)))
    return out


def save_curve_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CURVE_HEADER)
        for value, est in rows:
            writer.writerow([repr(value), repr(est.probability),
                             repr(est.std_error), est.n_samples, est.seed])


def load_curve_csv(path):
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CURVE_HEADER:
            raise InterventionError(f"expected header {CURVE_HEADER}, got {header}")
        for row in reader:
            rows.append((float(row[0]),
                         DoEstimate(float(row[1]), float(row[2]),
                                    int(row[3]), int(row[4]))))
    return rows
