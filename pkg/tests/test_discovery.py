from itertools import combinations

import numpy as np
import pytest

from causalpour.discovery import (CiTest, DiscoveryError, EdgeFrequencyTable,
                                  SingularCovariance, Tiers,
                                  UnresolvedUndirectedEdge, bootstrap, ci_test,
                                  infer_kinds, pc, stable_graph)
from causalpour.graph import Binary, Continuous
from causalpour.world import pouring_graph, pouring_tier_groups

POURING_TIERS = Tiers(tuple(tuple(g) for g in pouring_tier_groups()))
TRUE_EDGES = {("RC", "RV"), ("FU", "RV"), ("FU", "S"), ("RD", "S"), ("RV", "S")}


def brute_force_skeleton(data, test=CiTest(), max_cond=3):
    """Edge iff no conditioning subset of the other variables separates."""
    nodes = sorted(data)
    edges = set()
    for a, b in combinations(nodes, 2):
        rest = [n for n in nodes if n not in (a, b)]
        separated = False
        for size in range(min(len(rest), max_cond) + 1):
            for subset in combinations(rest, size):
                independent, _ = ci_test(data, a, b, subset, test)
                if independent:
                    separated = True
                    break
            if separated:
                break
        if not separated:
            edges.add(frozenset((a, b)))
    return edges


def pdag_adjacencies(pdag):
    out = set()
    for a, b in pdag.directed:
        out.add(frozenset((a, b)))
    out |= set(pdag.undirected)
    return out


# -- conditional independence tests ---------------------------------------------

def test_independent_gaussians_usually_accepted():
    accepted = 0
    for seed in range(40):
        rng = np.random.default_rng(seed)
        data = {"x": rng.normal(size=5000), "y": rng.normal(size=5000)}
        independent, _ = ci_test(data, "x", "y")
        accepted += independent
    assert accepted >= 33  # nominal 95% acceptance at alpha 0.05


def test_near_functional_dependence():
    rng = np.random.default_rng(1)
    x = rng.normal(size=2000)
    data = {"x": x, "y": x + 0.01 * rng.normal(size=2000)}
    independent, p = ci_test(data, "x", "y")
    assert not independent
    assert p < 1e-6


def test_common_cause_screened_off():
    rng = np.random.default_rng(2)
    z = rng.normal(size=4000)
    data = {"z": z,
            "x": z + 0.5 * rng.normal(size=4000),
            "y": z + 0.5 * rng.normal(size=4000)}
    dep_marg, _ = ci_test(data, "x", "y")
    ind_cond, _ = ci_test(data, "x", "y", ("z",))
    assert not dep_marg
    assert ind_cond


def test_collider_opens_under_conditioning():
    rng = np.random.default_rng(3)
    x = rng.normal(size=4000)
    y = rng.normal(size=4000)
    data = {"x": x, "y": y, "z": x + y + 0.3 * rng.normal(size=4000)}
    ind_marg, _ = ci_test(data, "x", "y")
    dep_cond, _ = ci_test(data, "x", "y", ("z",))
    assert ind_marg
    assert not dep_cond


def test_capacity_effect_fully_mediated(train_columns):
    independent, _ = ci_test(train_columns, "RC", "S", ("RV", "FU", "RD"))
    assert independent
    dependent_marginally, _ = ci_test(train_columns, "RC", "S")
    assert not dependent_marginally


def test_dg_lrt_tracks_fisher_z(train_columns):
    for cond in ((), ("RV", "FU"), ("RV", "FU", "RD")):
        f_ind, _ = ci_test(train_columns, "RC", "S", cond, CiTest())
        d_ind, _ = ci_test(train_columns, "RC", "S", cond, CiTest(kind="dg_lrt"))
        assert f_ind == d_ind


def test_needs_enough_rows():
    data = {"x": np.arange(12.0), "y": np.arange(12.0), "z": np.arange(12.0)}
    with pytest.raises(DiscoveryError):
        ci_test(data, "x", "y", ("z",) * 3)


def test_constant_column_is_singular():
    data = {"x": np.ones(100), "y": np.random.default_rng(0).normal(size=100)}
    with pytest.raises(SingularCovariance):
        ci_test(data, "x", "y")


def test_ci_config_validation():
    with pytest.raises(DiscoveryError):
        CiTest(kind="mutual_information")
    with pytest.raises(DiscoveryError):
        CiTest(alpha=1.0)


# -- pc ---------------------------------------------------------------------------

def test_pc_recovers_pouring_dag(train_columns):
    pdag = pc(train_columns, tiers=POURING_TIERS)
    assert set(pdag.directed) == TRUE_EDGES
    assert not pdag.undirected


def test_pc_skeleton_has_no_extra_adjacencies(train_columns):
    pdag = pc(train_columns, tiers=POURING_TIERS)
    assert pdag_adjacencies(pdag) == {frozenset(e) for e in TRUE_EDGES}


def test_two_independent_columns_give_empty_graph():
    rng = np.random.default_rng(8)
    data = {"a": rng.normal(size=3000), "b": rng.normal(size=3000)}
    pdag = pc(data)
    assert not pdag.directed and not pdag.undirected


def test_chain_skeleton():
    rng = np.random.default_rng(9)
    a = rng.normal(size=4000)
    b = a + 0.6 * rng.normal(size=4000)
    c = b + 0.6 * rng.normal(size=4000)
    pdag = pc({"a": a, "b": b, "c": c})
    assert pdag_adjacencies(pdag) == {frozenset(("a", "b")), frozenset(("b", "c"))}


def test_collider_is_oriented_without_tiers():
    rng = np.random.default_rng(10)
    x = rng.normal(size=5000)
    y = rng.normal(size=5000)
    z = x + y + 0.4 * rng.normal(size=5000)
    pdag = pc({"x": x, "y": y, "z": z})
    assert ("x", "z") in pdag.directed and ("y", "z") in pdag.directed


def test_pc_matches_brute_force_skeleton():
    rng = np.random.default_rng(12)
    n = 3000
    a = rng.normal(size=n)
    b = rng.normal(size=n)
    c = a + b + 0.4 * rng.normal(size=n)
    d = c + 0.4 * rng.normal(size=n)
    data = {"a": a, "b": b, "c": c, "d": d}
    assert pdag_adjacencies(pc(data)) == brute_force_skeleton(data)


def test_pc_row_order_invariant(train_columns):
    permuted = {}
    order = np.random.default_rng(13).permutation(len(train_columns["RC"]))
    for k, v in train_columns.items():
        permuted[k] = v[order]
    a = pc(train_columns, tiers=POURING_TIERS)
    b = pc(permuted, tiers=POURING_TIERS)
    assert a.directed == b.directed and a.undirected == b.undirected


def test_pc_rejects_empty_data():
    with pytest.raises(DiscoveryError):
        pc({"a": np.array([]), "b": np.array([])})


def test_tiers_forbid_back_in_time():
    tiers = POURING_TIERS
    assert tiers.forbids("S", "RC")
    assert not tiers.forbids("RC", "S")
    assert not tiers.forbids("RC", "FU")  # same tier, within allowed
    strict = Tiers((("a",), ("b",)), allow_within_tier_edges=False)
    assert not strict.forbids("a", "b")
    with pytest.raises(DiscoveryError):
        Tiers((("a", "b"), ("b",)))


# -- bootstrap ---------------------------------------------------------------------

def test_bootstrap_single_run_gives_indicator_frequencies(train_columns):
    small = {k: v[:800] for k, v in train_columns.items()}
    table = bootstrap(small, n_boot=1, tiers=POURING_TIERS, seed=4)
    for freqs in table.frequencies.values():
        assert sorted(freqs.values()) == [0.0, 0.0, 0.0, 1.0]


def test_bootstrap_deterministic(train_columns):
    small = {k: v[:800] for k, v in train_columns.items()}
    a = bootstrap(small, n_boot=25, tiers=POURING_TIERS, seed=9)
    b = bootstrap(small, n_boot=25, tiers=POURING_TIERS, seed=9)
    assert a.frequencies == b.frequencies


def test_bootstrap_frequencies_sum_to_one(train_columns):
    small = {k: v[:800] for k, v in train_columns.items()}
    table = bootstrap(small, n_boot=13, tiers=POURING_TIERS, seed=2)
    table.validate()
    for freqs in table.frequencies.values():
        assert sum(freqs.values()) == pytest.approx(1.0, abs=1e-9)


def test_bootstrap_table_csv_round_trip(tmp_path, train_columns):
    small = {k: v[:800] for k, v in train_columns.items()}
    table = bootstrap(small, n_boot=7, tiers=POURING_TIERS, seed=2)
    path = tmp_path / "freq.csv"
    table.save_csv(path)
    restored = EdgeFrequencyTable.load_csv(path)
    assert restored.nodes == table.nodes
    for pair, freqs in table.frequencies.items():
        for t, v in freqs.items():
            assert restored.frequencies[pair][t] == pytest.approx(v, abs=1e-12)


# -- stable graph ---------------------------------------------------------------------

def pair_table(**rows):
    nodes = sorted({n for pair in rows for n in pair.split("__")})
    freqs = {}
    for key, spec in rows.items():
        a, b = key.split("__")
        base = {"right": 0.0, "left": 0.0, "undirected": 0.0, "none": 0.0}
        base.update(spec)
        freqs[(a, b)] = base
    return EdgeFrequencyTable(tuple(nodes), freqs)


def test_stable_graph_keeps_majority_edges():
    table = pair_table(A__B={"right": 0.9, "none": 0.1},
                       A__C={"none": 1.0},
                       B__C={"left": 0.8, "none": 0.2})
    graph = stable_graph(table, kinds={n: Continuous((0, 1)) for n in "ABC"})
    assert set(graph.edges) == {("A", "B"), ("C", "B")}


def test_even_split_is_excluded():
    table = pair_table(A__B={"right": 0.5, "none": 0.5})
    graph = stable_graph(table, kinds={n: Continuous((0, 1)) for n in "AB"})
    assert graph.edges == ()


def test_all_none_gives_empty_graph():
    table = pair_table(A__B={"none": 1.0}, A__C={"none": 1.0}, B__C={"none": 1.0})
    graph = stable_graph(table, kinds={n: Continuous((0, 1)) for n in "ABC"})
    assert graph.edges == ()


def test_stable_undirected_resolved_by_tiers():
    table = pair_table(A__B={"undirected": 0.8, "none": 0.2})
    tiers = Tiers((("A",), ("B",)))
    graph = stable_graph(table, tiers=tiers,
                         kinds={n: Continuous((0, 1)) for n in "AB"})
    assert graph.edges == (("A", "B"),)


def test_stable_undirected_without_tiers_errors():
    table = pair_table(A__B={"undirected": 0.8, "none": 0.2})
    with pytest.raises(UnresolvedUndirectedEdge):
        stable_graph(table, kinds={n: Continuous((0, 1)) for n in "AB"})


def test_stable_graph_from_pouring_bootstrap(train_columns):
    table = bootstrap(train_columns, n_boot=150, tiers=POURING_TIERS, seed=0)
    kinds = {n: k for n, k in pouring_graph().nodes}
    graph = stable_graph(table, 0.5, tiers=POURING_TIERS, kinds=kinds)
    assert set(graph.edges) == TRUE_EDGES
    for edge in TRUE_EDGES:
        assert table.frequencies[tuple(sorted(edge))]["right"] > 0.75


def test_infer_kinds(train_columns):
    kinds = infer_kinds(train_columns)
    assert isinstance(kinds["S"], Binary)
    assert isinstance(kinds["RC"], Continuous)
    lo, hi = kinds["RC"].support
    assert lo <= train_columns["RC"].min() and hi >= train_columns["RC"].max()
