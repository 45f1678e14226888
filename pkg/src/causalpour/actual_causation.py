"""Token-level causation test for one observed trial.

Given an observed context and a directed path from a candidate cause X to
the outcome Y, X taking its actual value x rather than an alternative x'
is an actual cause of Y when, for every subset Z' of the mediators on the
path,

    P(Y | do(offpath=w*, X=x, Z'=z*))  >  P(Y | do(offpath=w*, X=x'))

holds at the observed values. The left side gives one reference
probability per mediator subset; the right side is a curve over
contrastive values x' in which the mediators respond freely. The region
where the inequality holds for all subsets (on point estimates) is the
search space for alternative actions.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .graph import InvalidIntervention
from .interventions import DoEstimate, TrainedModel, do_curve, interventional_probability

MAX_MEDIATORS = 12
DEFAULT_GRID_POINTS = 101

EMPTY_SUBSET_KEY = ""


class AcError(ValueError):
    pass


class TooManyMediators(AcError):
    pass


def subset_key(names) -> str:
    """Stable string key for a mediator subset; empty string for the empty set."""
    return ",".join(sorted(names))


@dataclass(eq=False)
class AcQuery:
    """One actual-causation question against a trained model.

    ``context`` must assign every node except the outcome; the actual
    value of the cause is read from it. ``grid`` holds the contrastive
    values to scan and must stay inside the cause's support.
    """

    model: TrainedModel
    cause: str
    outcome: str
    path: tuple[str, ...]
    context: dict[str, float]
    grid: np.ndarray
    n_samples: int = 10_000
    seed: int = 0

    off_path: frozenset = field(init=False)
    mediators: tuple[str, ...] = field(init=False)

    def __post_init__(self):
        self.path = tuple(self.path)
        if not self.path or self.path[0] != self.cause:
            raise AcError(f"path must start at the cause {self.cause!r}")
        w, z = self.model.graph.partition_for_path(self.path, self.outcome)
        self.off_path = frozenset(w)
        self.mediators = tuple(sorted(z))
        expected = set(self.model.graph.node_names) - {self.outcome}
        if set(self.context) != expected:
            raise AcError(
                f"context must assign exactly {sorted(expected)}, "
                f"got {sorted(self.context)}")
        kind = self.model.graph.kind(self.cause)
        self.grid = np.asarray(self.grid, dtype=float)
        if self.grid.size == 0:
            raise AcError("grid is empty")
        for v in self.grid:
            if not kind.contains(v):
                raise InvalidIntervention(
                    f"grid value {v} outside the support of {self.cause!r}")

    @property
    def actual_value(self) -> float:
        return float(self.context[self.cause])

    def _off_path_do(self) -> dict[str, float]:
        return {w: self.context[w] for w in sorted(self.off_path)}


def reference_probabilities(query: AcQuery) -> dict[str, DoEstimate]:
    """Left-hand probabilities, one per mediator subset (2^|Z| entries).

    Keys are ``subset_key`` strings; the empty subset is always present.
    """
    z = query.mediators
    if len(z) > MAX_MEDIATORS:
        raise TooManyMediators(f"{len(z)} mediators on path {query.path}")
    base = query._off_path_do()
    base[query.cause] = query.actual_value
    out: dict[str, DoEstimate] = {}
    for mask in range(2 ** len(z)):
        subset = tuple(z[i] for i in range(len(z)) if mask >> i & 1)
        do = dict(base)
        for m in subset:
            do[m] = float(query.context[m])
        out[subset_key(subset)] = interventional_probability(
            query.model, query.outcome, do, query.n_samples, query.seed)
    return dict(sorted(out.items(), key=lambda kv: (kv[0].count(",") + bool(kv[0]), kv[0])))


def contrastive_curve(query: AcQuery):
    """Right-hand probabilities over the contrastive grid.

    Mediators are not intervened: they respond to each x' through their
    mechanisms. Uses common random numbers across the grid.
    """
    return do_curve(query.model, query.outcome, (query.cause, query.grid),
                    context=query._off_path_do(), n_samples=query.n_samples,
                    seed=query.seed)


@dataclass
class AcTestResult:
    raising: bool
    contrastive_value: float
    rhs: DoEstimate
    lhs: dict[str, DoEstimate]


def ac_test(query: AcQuery, x_prime: float) -> AcTestResult:
    """Probability raising at a single contrastive value.

    True iff every reference probability strictly exceeds the contrastive
    one on point estimates; the returned evidence carries all estimates so
    callers can apply stricter statistical criteria.
    """
    kind = query.model.graph.kind(query.cause)
    if not kind.contains(x_prime):
        raise InvalidIntervention(
            f"x'={x_prime} outside the support of {query.cause!r}")
    lhs = reference_probabilities(query)
    do = query._off_path_do()
    do[query.cause] = float(x_prime)
    rhs = interventional_probability(query.model, query.outcome, do,
                                     query.n_samples, query.seed)
    raising = all(est.probability > rhs.probability for est in lhs.values())
    return AcTestResult(raising, float(x_prime), rhs, lhs)


@dataclass(eq=False)
class AcRegion:
    """Full contrastive sweep: grid, both inequality sides, raising flags."""

    cause: str
    outcome: str
    path: tuple[str, ...]
    mediators: tuple[str, ...]
    context: dict[str, float]
    grid: np.ndarray
    rhs: list[DoEstimate]
    lhs: dict[str, DoEstimate]
    raising: list[bool]

    @property
    def actual_value(self) -> float:
        return float(self.context[self.cause])

    @property
    def full_subset_key(self) -> str:
        return subset_key(self.mediators)

    def to_dict(self) -> dict:
        return {
            "cause": self.cause,
            "outcome": self.outcome,
            "path": list(self.path),
            "mediators": list(self.mediators),
            "context": dict(self.context),
            "grid": [float(v) for v in self.grid],
            "rhs": [est.to_dict() for est in self.rhs],
            "lhs": {k: est.to_dict() for k, est in self.lhs.items()},
            "raising": [bool(b) for b in self.raising],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "AcRegion":
        return cls(
            cause=payload["cause"], outcome=payload["outcome"],
            path=tuple(payload["path"]), mediators=tuple(payload["mediators"]),
            context={k: float(v) for k, v in payload["context"].items()},
            grid=np.array(payload["grid"], dtype=float),
            rhs=[DoEstimate.from_dict(d) for d in payload["rhs"]],
            lhs={k: DoEstimate.from_dict(d) for k, d in payload["lhs"].items()},
            raising=[bool(b) for b in payload["raising"]],
        )

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_json(cls, path) -> "AcRegion":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_csv(self, path) -> None:
        """Flat per-grid-point table for plotting; reference columns repeat."""
        lhs_cols = [f"lhs[{k}]" for k in self.lhs]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["value", "rhs_probability", "rhs_std_error", "raising",
                             *lhs_cols])
            for v, est, flag in zip(self.grid, self.rhs, self.raising):
                writer.writerow([repr(float(v)), repr(est.probability),
                                 repr(est.std_error), int(flag),
                                 *[repr(e.probability) for e in self.lhs.values()]])


def raising_region(query: AcQuery) -> AcRegion:
    """Evaluate both sides of the inequality over the whole grid."""
    lhs = reference_probabilities(query)
    rhs = contrastive_curve(query)
    floor = min(est.probability for est in lhs.values())
    raising = [floor > est.probability for _, est in rhs]
    return AcRegion(cause=query.cause, outcome=query.outcome, path=query.path,
                    mediators=query.mediators, context=dict(query.context),
                    grid=np.array(query.grid, dtype=float),
                    rhs=[est for _, est in rhs], lhs=lhs, raising=raising)


def default_grid(model: TrainedModel, node: str,
                 points: int = DEFAULT_GRID_POINTS) -> np.ndarray:
    """Uniform grid over the node's declared support."""
    kind = model.graph.kind(node)
    try:
        lo, hi = kind.support
    except AttributeError:
        raise AcError(f"{node!r} is not continuous") from None
    return np.linspace(lo, hi, points)
