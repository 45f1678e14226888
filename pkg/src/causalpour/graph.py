"""Causal DAG representation with variable metadata and path queries.

The graph is the shared vocabulary of the whole package: discovery produces
one, the density estimators are trained per node against it, and the
intervention engine walks it in topological order. Nodes are identified by
string name everywhere; indices never leak across module boundaries.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations

MAX_PATHS = 10_000

_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


class GraphError(ValueError):
    """Base class for graph construction and query failures."""


class CycleDetected(GraphError):
    def __init__(self, cycle):
        self.cycle = list(cycle)
        super().__init__("directed cycle: " + " -> ".join(self.cycle))


class UnknownNode(GraphError):
    pass


class DuplicateEdge(GraphError):
    pass


class PathInvalid(GraphError):
    pass


class TooManyPaths(GraphError):
    pass


class InvalidIntervention(GraphError):
    pass


@dataclass(frozen=True)
class Continuous:
    """Continuous variable with a closed support interval."""

    support: tuple[float, float]

    def __post_init__(self):
        lo, hi = self.support
        if not lo < hi:
            raise GraphError(f"continuous support needs min < max, got [{lo}, {hi}]")

    def contains(self, value) -> bool:
        lo, hi = self.support
        return lo <= float(value) <= hi


@dataclass(frozen=True)
class Binary:
    """Two-state variable with states {false, true}."""

    def contains(self, value) -> bool:
        return value in (True, False, 0, 1, 0.0, 1.0)


VariableKind = Continuous | Binary


@dataclass(frozen=True)
class CausalGraph:
    """Directed acyclic graph over named variables.

    Parameters
    ----------
    nodes : tuple of (name, VariableKind)
        Node declarations; names must be unique identifiers.
    edges : tuple of (from, to)
        Directed edges between declared nodes.

    The constructor does not validate; call :meth:`validate` (all query
    methods do so lazily). Instances are immutable and safe to share
    across threads.
    """

    nodes: tuple[tuple[str, VariableKind], ...]
    edges: tuple[tuple[str, str], ...]

    @classmethod
    def build(cls, nodes, edges) -> "CausalGraph":
        g = cls(tuple((str(n), k) for n, k in nodes),
                tuple((str(a), str(b)) for a, b in edges))
        g.validate()
        return g

    # -- validation ------------------------------------------------------

    def validate(self) -> None:
        """Raise a GraphError unless every structural invariant holds."""
        seen = set()
        for name, kind in self.nodes:
            if not _NAME_RE.match(name):
                raise GraphError(f"node name {name!r} is not an identifier")
            if name in seen:
                raise GraphError(f"duplicate node name {name!r}")
            if not isinstance(kind, (Continuous, Binary)):
                raise GraphError(f"node {name!r} has invalid kind {kind!r}")
            seen.add(name)
        edge_set = set()
        for a, b in self.edges:
            if a not in seen:
                raise UnknownNode(f"edge endpoint {a!r} is not a declared node")
            if b not in seen:
                raise UnknownNode(f"edge endpoint {b!r} is not a declared node")
            if a == b:
                raise CycleDetected([a, a])
            if (a, b) in edge_set:
                raise DuplicateEdge(f"edge {a}->{b} appears twice")
            edge_set.add((a, b))
        self._check_acyclic()

    def _check_acyclic(self):
        color = {n: 0 for n, _ in self.nodes}  # 0 white, 1 on stack, 2 done
        children = {}
        for a, b in self.edges:
            children.setdefault(a, []).append(b)
        stack_trace: list[str] = []

        def visit(u):
            color[u] = 1
            stack_trace.append(u)
            for v in children.get(u, ()):
                if color[v] == 1:
                    cycle = stack_trace[stack_trace.index(v):] + [v]
                    raise CycleDetected(cycle)
                if color[v] == 0:
                    visit(v)
            stack_trace.pop()
            color[u] = 2

        for n, _ in self.nodes:
            if color[n] == 0:
                visit(n)

    # -- lookups ---------------------------------------------------------

    @cached_property
    def node_names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.nodes)

    @cached_property
    def kinds(self) -> dict[str, VariableKind]:
        return {n: k for n, k in self.nodes}

    def kind(self, name: str) -> VariableKind:
        try:
            return self.kinds[name]
        except KeyError:
            raise UnknownNode(f"no node named {name!r}") from None

    @cached_property
    def _parent_map(self) -> dict[str, tuple[str, ...]]:
        acc: dict[str, list[str]] = {n: [] for n in self.node_names}
        for a, b in self.edges:
            acc[b].append(a)
        return {n: tuple(sorted(ps)) for n, ps in acc.items()}

    @cached_property
    def _child_map(self) -> dict[str, tuple[str, ...]]:
        acc: dict[str, list[str]] = {n: [] for n in self.node_names}
        for a, b in self.edges:
            acc[a].append(b)
        return {n: tuple(sorted(cs)) for n, cs in acc.items()}

    def parents(self, name: str) -> tuple[str, ...]:
        """Parents of a node in fixed lexicographic order."""
        self.kind(name)
        return self._parent_map[name]

    def children(self, name: str) -> tuple[str, ...]:
        self.kind(name)
        return self._child_map[name]

    # -- queries ---------------------------------------------------------

    def topological_order(self) -> list[str]:
        """Kahn's algorithm with lexicographic tie-breaking.

        Every edge goes from an earlier to a later position; the order is
        deterministic across runs because ready nodes are consumed in name
        order.
        """
        return list(self._topological_cache)

    @cached_property
    def _topological_cache(self) -> tuple[str, ...]:
        self.validate()
        indeg = {n: len(self._parent_map[n]) for n in self.node_names}
        ready = sorted(n for n, d in indeg.items() if d == 0)
        order: list[str] = []
        while ready:
            u = ready.pop(0)
            order.append(u)
            changed = False
            for v in self._child_map[u]:
                indeg[v] -= 1
                if indeg[v] == 0:
                    ready.append(v)
                    changed = True
            if changed:
                ready.sort()
        return tuple(order)

    def directed_paths(self, x: str, y: str) -> list[list[str]]:
        """All simple directed paths from ``x`` to ``y``.

        Returned sorted by (length, node names) so callers can index paths
        stably. Raises TooManyPaths beyond MAX_PATHS as a guard against
        adversarial graphs.
        """
        self.validate()
        self.kind(x)
        self.kind(y)
        if x == y:
            raise PathInvalid("path endpoints must differ")
        paths: list[list[str]] = []
        trace = [x]

        def walk(u):
            for v in self._child_map[u]:
                if v == y:
                    if len(paths) >= MAX_PATHS:
                        raise TooManyPaths(f"more than {MAX_PATHS} paths from {x} to {y}")
                    paths.append(trace + [v])
                elif v not in trace:
                    trace.append(v)
                    walk(v)
                    trace.pop()

        walk(x)
        paths.sort(key=lambda p: (len(p), p))
        return paths

    def partition_for_path(self, path, outcome: str):
        """Split the remaining nodes around a cause->outcome path.

        Returns ``(off_path, mediators)`` where the mediators are the
        interior nodes of the path and the off-path set is everything else
        except the cause and the outcome.
        """
        self.validate()
        path = list(path)
        if len(path) < 2:
            raise PathInvalid("path needs at least two nodes")
        if path[-1] != outcome:
            raise PathInvalid(f"path must end at {outcome!r}, ends at {path[-1]!r}")
        if len(set(path)) != len(path):
            raise PathInvalid("path revisits a node")
        for a, b in zip(path, path[1:]):
            if (a, b) not in set(self.edges):
                raise PathInvalid(f"{a}->{b} is not an edge")
        mediators = set(path[1:-1])
        off_path = set(self.node_names) - {path[0], outcome} - mediators
        return off_path, mediators

    # -- serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        out_nodes = []
        for name, kind in self.nodes:
            if isinstance(kind, Continuous):
                out_nodes.append({"name": name, "kind": "continuous",
                                  "support": [kind.support[0], kind.support[1]]})
            else:
                out_nodes.append({"name": name, "kind": "binary", "support": None})
        return {"nodes": out_nodes, "edges": [[a, b] for a, b in self.edges]}

    @classmethod
    def from_dict(cls, payload: dict) -> "CausalGraph":
        try:
            nodes = []
            for spec in payload["nodes"]:
                if spec["kind"] == "continuous":
                    lo, hi = spec["support"]
                    nodes.append((spec["name"], Continuous((float(lo), float(hi)))))
                elif spec["kind"] == "binary":
                    nodes.append((spec["name"], Binary()))
                else:
                    raise GraphError(f"unknown kind {spec['kind']!r}")
            edges = [(a, b) for a, b in payload["edges"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise GraphError(f"malformed graph payload: {exc}") from exc
        return cls.build(nodes, edges)

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_json(cls, path) -> "CausalGraph":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class InterventionSet:
    """Assignment of fixed values to a subset of graph nodes."""

    assignments: dict[str, float | bool] = field(default_factory=dict)

    def validate_for(self, graph: CausalGraph, exclude: str | None = None) -> None:
        for name, value in self.assignments.items():
            kind = graph.kinds.get(name)
            if kind is None:
                raise InvalidIntervention(f"cannot intervene on unknown node {name!r}")
            if name == exclude:
                raise InvalidIntervention(f"node {name!r} may not be intervened here")
            if not kind.contains(value):
                raise InvalidIntervention(
                    f"value {value!r} outside the support of node {name!r}")

    def __len__(self):
        return len(self.assignments)

    def __contains__(self, name):
        return name in self.assignments


def validate(graph: CausalGraph) -> None:
    """Module-level alias so callers can validate without a method call."""
    graph.validate()
