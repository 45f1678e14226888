"""Shared fixtures: pinned datasets, one trained model per session, and
hand-wired mechanisms for structural tests that should not pay training
cost."""

import numpy as np
import pytest

from causalpour.graph import Binary, CausalGraph, Continuous
from causalpour.interventions import TrainedModel
from causalpour.nade import BERNOULLI, GAUSSIAN, Mechanism, TrainConfig, fit
from causalpour.world import generate_dataset, pouring_graph, trial_columns

TRAIN_SEED = 23
TEST_SEED = 24
FIT_SEED = 7


@pytest.fixture(scope="session")
def train_trials():
    return generate_dataset(6000, seed=TRAIN_SEED)


@pytest.fixture(scope="session")
def test_trials():
    return generate_dataset(3000, seed=TEST_SEED)


@pytest.fixture(scope="session")
def train_columns(train_trials):
    return trial_columns(train_trials)


@pytest.fixture(scope="session")
def trained_model(train_columns):
    graph = pouring_graph()
    seeds = np.random.SeedSequence(FIT_SEED).generate_state(len(graph.node_names))
    mechanisms = {}
    for node, seed in zip(sorted(graph.node_names), seeds):
        head = BERNOULLI if isinstance(graph.kind(node), Binary) else GAUSSIAN
        mechanisms[node] = fit(train_columns, node, head, graph.parents(node),
                               TrainConfig(seed=int(seed)))
    return TrainedModel(graph, mechanisms)


def inverse_softplus(y):
    return float(np.log(np.expm1(y)))


def constant_mechanism(node, parents, head, out_bias):
    """All-zero weights: the head output equals ``out_bias`` exactly."""
    parents = tuple(parents)
    d = max(len(parents), 1)
    dims = [d, 16, 16, len(out_bias)]
    weights = [np.zeros((a, b)) for a, b in zip(dims, dims[1:])]
    biases = [np.zeros(b) for b in dims[1:]]
    biases[-1] = np.array(out_bias, dtype=float)
    return Mechanism(node, parents, head, weights, biases)


def linear_mechanism(node, parents, head, coeffs, intercept, scale=0.05):
    """Approximately linear net: head output ~ coeffs . x + intercept.

    Routes each input through one hidden unit in the small-signal range of
    tanh, so the composition is linear to ~1% for |scale * x| < 0.2. Exact
    linearity is never asserted; oracles integrate the same network.
    """
    parents = tuple(parents)
    d = max(len(parents), 1)
    w1 = np.zeros((d, 16))
    for i in range(d):
        w1[i, i] = scale
    w2 = np.zeros((16, 16))
    for i in range(d):
        w2[i, i] = 1.0
    out_dim = 2 if head == GAUSSIAN else 1
    w3 = np.zeros((16, out_dim))
    for i, c in enumerate(coeffs):
        w3[i, 0] = c / scale
    biases = [np.zeros(16), np.zeros(16), np.zeros(out_dim)]
    biases[-1][0] = intercept
    if head == GAUSSIAN:
        biases[-1][1] = inverse_softplus(0.05)  # narrow but nonzero spread
    return Mechanism(node, parents, head, [w1, w2, w3], biases)


def gaussian_root(node, mu, sigma):
    return constant_mechanism(node, (), GAUSSIAN,
                              [mu, inverse_softplus(sigma - 1e-3)])


@pytest.fixture()
def toy_pouring_model():
    """Hand-wired model on the pouring graph: fast, deterministic, with a
    strong mediated channel FU -> RV -> S and a direct RD -> S channel."""
    graph = pouring_graph()
    mechs = {
        "RC": gaussian_root("RC", 1.0, 0.25),
        "FU": gaussian_root("FU", 0.7, 0.2),
        "RD": gaussian_root("RD", 1.0, 0.25),
        # parents sorted: (FU, RC); rv ~ fu - 0.7 rc + 0.7 tracks fu/rc
        # around the priors' center
        "RV": linear_mechanism("RV", ("FU", "RC"), GAUSSIAN,
                               coeffs=[1.0, -0.7], intercept=0.7),
        # parents sorted: (FU, RD, RV); spillage rises in rv, falls in rd
        "S": linear_mechanism("S", ("FU", "RD", "RV"), BERNOULLI,
                              coeffs=[1.0, -4.0, 6.0], intercept=-1.5),
    }
    return TrainedModel(graph, mechs)


@pytest.fixture()
def two_node_model():
    """A -> Y with a seeded random response net; A is a wide Gaussian."""
    graph = CausalGraph.build(
        nodes=[("A", Continuous((-4.0, 4.0))), ("Y", Binary())],
        edges=[("A", "Y")])
    from causalpour.nade import init_mechanism
    y = init_mechanism("Y", ("A",), BERNOULLI, seed=3)
    return TrainedModel(graph, {"A": gaussian_root("A", 0.0, 0.5), "Y": y})
