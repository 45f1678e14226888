"""Constraint-based structure learning with bootstrap stability.

The PC algorithm builds a skeleton by removing edges whose endpoints test
conditionally independent, then orients what it can: background tiers
first (later tiers cannot cause earlier ones), unshielded colliders next,
and the standard propagation rules last. Running it over bootstrap
resamples and tallying edge types per node pair gives the stability table
from which the final graph keeps only edge types above a frequency
threshold.

Two conditional-independence tests are provided. The default computes the
partial correlation from regression residuals and applies the Fisher
z-transform. The likelihood-ratio variant embeds the (binary) discrete
variables as 0/1 indicators and compares nested linear-Gaussian fits,
which for a single added regressor reduces to a chi-square test on the
same partial correlation.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy import stats

from .graph import Binary, CausalGraph, Continuous, GraphError

FISHER_Z = "fisher_z"
DG_LRT = "dg_lrt"

EDGE_TYPES = ("right", "left", "undirected", "none")


class DiscoveryError(ValueError):
    pass


class SingularCovariance(DiscoveryError):
    pass


class UnresolvedUndirectedEdge(DiscoveryError):
    pass


@dataclass(frozen=True)
class CiTest:
    kind: str = FISHER_Z
    alpha: float = 0.05

    def __post_init__(self):
        if self.kind not in (FISHER_Z, DG_LRT):
            raise DiscoveryError(f"unknown CI test {self.kind!r}")
        if not 0.0 < self.alpha < 1.0:
            raise DiscoveryError("alpha must lie strictly between 0 and 1")


@dataclass(frozen=True)
class Tiers:
    """Ordered node groups; later groups cannot cause earlier ones."""

    groups: tuple[tuple[str, ...], ...]
    allow_within_tier_edges: bool = True

    def __post_init__(self):
        object.__setattr__(self, "groups",
                           tuple(tuple(g) for g in self.groups))
        seen = set()
        for g in self.groups:
            for n in g:
                if n in seen:
                    raise DiscoveryError(f"node {n!r} appears in two tiers")
                seen.add(n)

    def index(self, node) -> int | None:
        for i, g in enumerate(self.groups):
            if node in g:
                return i
        return None

    def forbids(self, a, b) -> bool:
        """True when an edge a->b would run back in time."""
        ia, ib = self.index(a), self.index(b)
        if ia is None or ib is None:
            return False
        if ia == ib:
            return not self.allow_within_tier_edges
        return ia > ib

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump([list(g) for g in self.groups], fh)
            fh.write("\n")

    @classmethod
    def from_json(cls, path, allow_within_tier_edges=True):
        with open(path) as fh:
            payload = json.load(fh)
        if (not isinstance(payload, list)
                or not all(isinstance(g, list) for g in payload)):
            raise DiscoveryError("tiers file must hold a JSON list of lists")
        return cls(tuple(tuple(str(n) for n in g) for g in payload),
                   allow_within_tier_edges)


def _partial_correlation(data, x, y, given):
    cols = [x, y, *given]
    for c in cols:
        if c not in data:
            raise DiscoveryError(f"no column named {c!r}")
    n = len(data[x])
    if n < len(given) + 10:
        raise DiscoveryError(
            f"need at least {len(given) + 10} rows for |Z|={len(given)}, have {n}")
    xs = np.asarray(data[x], dtype=float)
    ys = np.asarray(data[y], dtype=float)
    if given:
        design = np.column_stack([np.ones(n)]
                                 + [np.asarray(data[g], dtype=float) for g in given])
        beta_x, *_ = np.linalg.lstsq(design, xs, rcond=None)
        beta_y, *_ = np.linalg.lstsq(design, ys, rcond=None)
        rx = xs - design @ beta_x
        ry = ys - design @ beta_y
    else:
        rx = xs - xs.mean()
        ry = ys - ys.mean()
    sx = np.sqrt(rx @ rx)
    sy = np.sqrt(ry @ ry)
    if sx < 1e-12 * np.sqrt(n) or sy < 1e-12 * np.sqrt(n):
        raise SingularCovariance(
            f"residual variance of {x!r} or {y!r} vanishes given {list(given)}")
    r = float(rx @ ry / (sx * sy))
    return min(max(r, -1.0 + 1e-15), 1.0 - 1e-15)


def ci_test(data, x, y, given=(), test: CiTest = CiTest()):
    """Test x independent of y given a conditioning set.

    Returns ``(independent, p_value)`` where independence is declared when
    the p-value exceeds the test's alpha.
    """
    given = tuple(given)
    r = _partial_correlation(data, x, y, given)
    n = len(data[x])
    if test.kind == FISHER_Z:
        z = np.arctanh(r) * np.sqrt(max(n - len(given) - 3, 1))
        p = float(2.0 * stats.norm.sf(abs(z)))
    else:
        # nested Gaussian likelihood ratio for one added regressor
        lr = -n * np.log1p(-r * r)
        p = float(stats.chi2.sf(lr, df=1))
    return p > test.alpha, p


class Pdag:
    """Partially directed graph produced by one PC run."""

    def __init__(self, nodes):
        self.nodes = tuple(nodes)
        self.directed: set[tuple[str, str]] = set()
        self.undirected: set[frozenset] = set()

    def adjacent(self, a):
        out = set()
        for u, v in self.directed:
            if u == a:
                out.add(v)
            elif v == a:
                out.add(u)
        for pair in self.undirected:
            if a in pair:
                out |= pair - {a}
        return out

    def has_any_edge(self, a, b):
        return ((a, b) in self.directed or (b, a) in self.directed
                or frozenset((a, b)) in self.undirected)

    def orient(self, a, b):
        self.undirected.discard(frozenset((a, b)))
        self.directed.add((a, b))

    def edge_type(self, a, b) -> str:
        """Edge type for the ordered pair (a, b)."""
        if (a, b) in self.directed:
            return "right"
        if (b, a) in self.directed:
            return "left"
        if frozenset((a, b)) in self.undirected:
            return "undirected"
        return "none"


def _skeleton(data, nodes, test, tiers, max_cond):
    adj = {n: set(nodes) - {n} for n in nodes}
    if tiers is not None and not tiers.allow_within_tier_edges:
        for a, b in combinations(nodes, 2):
            if tiers.forbids(a, b) and tiers.forbids(b, a):
                adj[a].discard(b)
                adj[b].discard(a)
    sepsets: dict[frozenset, set] = {}
    for depth in range(max_cond + 1):
        for a in nodes:
            for b in sorted(adj[a]):
                if b not in adj[a]:
                    continue
                candidates = sorted(adj[a] - {b})
                if len(candidates) < depth:
                    continue
                for zset in combinations(candidates, depth):
                    independent, _ = ci_test(data, a, b, zset, test)
                    if independent:
                        adj[a].discard(b)
                        adj[b].discard(a)
                        sepsets[frozenset((a, b))] = set(zset)
                        break
    return adj, sepsets


def _apply_meek(pdag: Pdag, tiers):
    def may_orient(a, b):
        if tiers is not None and tiers.forbids(a, b):
            return False
        return frozenset((a, b)) in pdag.undirected

    changed = True
    while changed:
        changed = False
        for pair in sorted(tuple(sorted(p)) for p in pdag.undirected):
            for b, c in (pair, pair[::-1]):
                # R1: a->b, b-c, a and c non-adjacent  =>  b->c
                if any(u != c and not pdag.has_any_edge(u, c)
                       for (u, v) in pdag.directed if v == b):
                    if may_orient(b, c):
                        pdag.orient(b, c)
                        changed = True
                        break
                # R2: b->k->c with b-c  =>  b->c
                if any((b, k) in pdag.directed and (k, c) in pdag.directed
                       for k in pdag.nodes):
                    if may_orient(b, c):
                        pdag.orient(b, c)
                        changed = True
                        break
                # R3: b-k1, b-k2, k1->c, k2->c, k1 and k2 non-adjacent => b->c
                spouses = [k for k in pdag.nodes
                           if (k, c) in pdag.directed
                           and frozenset((b, k)) in pdag.undirected]
                if any(not pdag.has_any_edge(k1, k2)
                       for k1, k2 in combinations(spouses, 2)):
                    if may_orient(b, c):
                        pdag.orient(b, c)
                        changed = True
                        break
            if changed:
                break


def pc(data, test: CiTest = CiTest(), tiers: Tiers | None = None,
       max_cond: int = 3) -> Pdag:
    """Classic PC: skeleton, tier orientation, colliders, Meek rules.

    Deterministic for fixed data: nodes iterate lexicographically and
    conditioning sets in sorted order.
    """
    nodes = sorted(data.keys())
    if not nodes or len(data[nodes[0]]) == 0:
        raise DiscoveryError("empty dataset")
    adj, sepsets = _skeleton(data, nodes, test, tiers, max_cond)

    pdag = Pdag(nodes)
    for a, b in combinations(nodes, 2):
        if b in adj[a]:
            pdag.undirected.add(frozenset((a, b)))

    if tiers is not None:
        for a, b in combinations(nodes, 2):
            if frozenset((a, b)) not in pdag.undirected:
                continue
            if tiers.forbids(a, b) and not tiers.forbids(b, a):
                pdag.orient(b, a)
            elif tiers.forbids(b, a) and not tiers.forbids(a, b):
                pdag.orient(a, b)

    # unshielded colliders a -> c <- b when c not in sepset(a, b)
    for c in nodes:
        for a, b in combinations(sorted(adj[c]), 2):
            if b in adj[a]:
                continue
            if c in sepsets.get(frozenset((a, b)), set()):
                continue
            for u in (a, b):
                if frozenset((u, c)) in pdag.undirected:
                    if tiers is None or not tiers.forbids(u, c):
                        pdag.orient(u, c)

    _apply_meek(pdag, tiers)
    return pdag


@dataclass
class EdgeFrequencyTable:
    """Per-pair edge-type frequencies over bootstrap runs."""

    nodes: tuple[str, ...]
    frequencies: dict[tuple[str, str], dict[str, float]] = field(default_factory=dict)

    def validate(self):
        for pair, freqs in self.frequencies.items():
            total = sum(freqs.get(t, 0.0) for t in EDGE_TYPES)
            if abs(total - 1.0) > 1e-9:
                raise DiscoveryError(f"frequencies for {pair} sum to {total}")

    def save_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["node_a", "node_b", *EDGE_TYPES])
            for (a, b) in sorted(self.frequencies):
                freqs = self.frequencies[(a, b)]
                writer.writerow([a, b] + [repr(freqs[t]) for t in EDGE_TYPES])

    @classmethod
    def load_csv(cls, path):
        freqs = {}
        nodes = set()
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["node_a", "node_b", *EDGE_TYPES]:
                raise DiscoveryError(f"unexpected header {header}")
            for row in reader:
                a, b = row[0], row[1]
                nodes |= {a, b}
                freqs[(a, b)] = dict(zip(EDGE_TYPES, map(float, row[2:])))
        table = cls(tuple(sorted(nodes)), freqs)
        table.validate()
        return table


def bootstrap(data, n_boot: int = 1000, test: CiTest = CiTest(),
              tiers: Tiers | None = None, seed: int = 0,
              max_cond: int = 3) -> EdgeFrequencyTable:
    """Resample rows with replacement, run PC, tally edge types per pair."""
    if n_boot < 1:
        raise DiscoveryError("n_boot must be >= 1")
    nodes = sorted(data.keys())
    arrays = {k: np.asarray(v, dtype=float) for k, v in data.items()}
    n = len(arrays[nodes[0]])
    counts = {(a, b): dict.fromkeys(EDGE_TYPES, 0)
              for a, b in combinations(nodes, 2)}
    for child in np.random.SeedSequence(seed).spawn(n_boot):
        rng = np.random.Generator(np.random.PCG64(child))
        idx = rng.integers(0, n, n)
        sample = {k: v[idx] for k, v in arrays.items()}
        pdag = pc(sample, test, tiers, max_cond)
        for a, b in counts:
            counts[(a, b)][pdag.edge_type(a, b)] += 1
    freqs = {pair: {t: c / n_boot for t, c in per.items()}
             for pair, per in counts.items()}
    table = EdgeFrequencyTable(tuple(nodes), freqs)
    table.validate()
    return table


def stable_graph(table: EdgeFrequencyTable, threshold: float = 0.5,
                 tiers: Tiers | None = None, kinds=None) -> CausalGraph:
    """Keep edge types observed in more than ``threshold`` of bootstraps.

    A stable undirected edge is resolved by tier order when the endpoints
    sit in different tiers, otherwise UnresolvedUndirectedEdge is raised.
    ``kinds`` maps node name to VariableKind; nodes default to continuous
    with a wide support when omitted.
    """
    table.validate()
    kinds = dict(kinds or {})
    edges = []
    for (a, b) in sorted(table.frequencies):
        freqs = table.frequencies[(a, b)]
        winner = None
        for t in EDGE_TYPES:
            if freqs.get(t, 0.0) > threshold:
                winner = t
                break
        if winner is None or winner == "none":
            continue
        if winner == "right":
            edges.append((a, b))
        elif winner == "left":
            edges.append((b, a))
        else:
            if tiers is not None:
                ia, ib = tiers.index(a), tiers.index(b)
                if ia is not None and ib is not None and ia != ib:
                    edges.append((a, b) if ia < ib else (b, a))
                    continue
            raise UnresolvedUndirectedEdge(
                f"stable undirected edge {a} - {b} cannot be oriented")
    nodes = [(n, kinds.get(n, Continuous((-1e9, 1e9)))) for n in table.nodes]
    graph = CausalGraph.build(nodes, edges)
    return graph


def infer_kinds(data) -> dict:
    """Binary for 0/1 columns, continuous with observed range otherwise."""
    kinds = {}
    for name, col in data.items():
        arr = np.asarray(col, dtype=float)
        values = np.unique(arr)
        if values.size <= 2 and np.all(np.isin(values, (0.0, 1.0))):
            kinds[name] = Binary()
        else:
            lo, hi = float(arr.min()), float(arr.max())
            pad = max(0.05 * (hi - lo), 1e-6)
            kinds[name] = Continuous((lo - pad, hi + pad))
    return kinds
