"""Synthetic pouring world: trial sampling, outcome model, and replays.

A trial pours the contents of a source container into a target container.
Three action parameters are drawn per trial (Gaussian, truncated to fixed
supports by rejection):

* ``rc`` - target capacity / source capacity
* ``fu`` - fullness fraction of the source
* ``rd`` - target rim diameter / source rim diameter

The poured volume relative to the target capacity is ``rv = fu / rc`` up
to a multiplicative packing disturbance. Spillage is resolved by a closed
form hazard combining three physical effects:

* rim crowding - at the pouring onset a full source meeting a narrow rim
  spills; probability rises steeply once ``fu`` exceeds a rim-dependent
  threshold line.
* bounce-out  - as the target fills, incoming content increasingly
  ricochets off what is already there; grows linearly with the fill
  fraction.
* piling overflow - granular content piles above the rim in a stable
  heap, so hard overflow starts only when the poured volume exceeds the
  nominal capacity by a piling margin; past it, spillage is certain.

The default coefficients were frozen from the grid search in
:mod:`causalpour.calibration`, which targets the qualitative behavior the
package's acceptance suite checks (sharp spillage decrease over the rim
ratio, near-chance dependence on capacity alone, rising curves in fullness
and fill volume, and a ~0.4 marginal spillage rate).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .graph import Binary, CausalGraph, Continuous

RC_SUPPORT = (0.5, 2.0)
FU_SUPPORT = (0.3, 1.0)
RD_SUPPORT = (0.5, 1.5)
RV_SUPPORT = (0.0, 3.0)

CSV_HEADER = ["rc", "fu", "rd", "rv", "spillage"]


class WorldError(ValueError):
    pass


@dataclass(frozen=True)
class WorldConfig:
    """Frozen coefficients of the stochastic spillage model."""

    sigma_pack: float = 0.10        # packing noise on rv, multiplicative
    rim_slope: float = 1.06         # fullness threshold line: slope * rd + intercept
    rim_intercept: float = -0.29
    rim_width: float = 0.045        # logistic width of the rim transition
    bounce_gain: float = 0.135      # bounce-out probability at full ramp
    bounce_lo: float = 0.5          # ramp start (fill fraction)
    bounce_hi: float = 1.4          # ramp end
    overflow_margin: float = 1.45   # piling limit in units of rv
    overflow_width: float = 0.03    # logistic width of the overflow cliff
    seed: int = 0

    def __post_init__(self):
        for name in ("rim_width", "overflow_width"):
            if not getattr(self, name) > 0:
                raise WorldError(f"{name} must be positive")
        if self.sigma_pack < 0:
            raise WorldError("sigma_pack must be nonnegative")
        if not self.bounce_lo < self.bounce_hi:
            raise WorldError("bounce ramp needs lo < hi")
        if not 0 <= self.bounce_gain < 1:
            raise WorldError("bounce_gain must be in [0, 1)")


DEFAULT_CONFIG = WorldConfig()


@dataclass(frozen=True)
class Trial:
    """One pouring record."""

    rc: float
    fu: float
    rd: float
    rv: float
    spillage: bool

    def __post_init__(self):
        checks = (("rc", self.rc, RC_SUPPORT), ("fu", self.fu, FU_SUPPORT),
                  ("rd", self.rd, RD_SUPPORT))
        for name, value, (lo, hi) in checks:
            if not lo <= value <= hi:
                raise WorldError(f"{name}={value} outside [{lo}, {hi}]")
        if not self.rv > 0:
            raise WorldError(f"rv={self.rv} must be positive")


def truncated_normal(rng, mu, sigma, lo, hi, size=None):
    """Rejection-sample a truncated Gaussian (vectorized when size given)."""
    if size is None:
        while True:
            draw = rng.normal(mu, sigma)
            if lo <= draw <= hi:
                return float(draw)
    out = np.empty(size)
    pending = np.arange(size)
    while pending.size:
        draw = rng.normal(mu, sigma, pending.size)
        ok = (draw >= lo) & (draw <= hi)
        out[pending[ok]] = draw[ok]
        pending = pending[~ok]
    return out


def sample_parameters(rng):
    """Draw one (rc, fu, rd) triple from the trial distributions."""
    rc = truncated_normal(rng, 1.0, 0.25, *RC_SUPPORT)
    fu = truncated_normal(rng, 0.7, 0.2, *FU_SUPPORT)
    rd = truncated_normal(rng, 1.0, 0.25, *RD_SUPPORT)
    return rc, fu, rd


def derive_rv(rc, fu, rng, config: WorldConfig = DEFAULT_CONFIG):
    """Fill fraction of the target: fu/rc with packing noise, kept positive."""
    rv = (fu / rc) * (1.0 + rng.normal(0.0, config.sigma_pack))
    return max(rv, 1e-9)


def spillage_probability(fu, rd, rv, config: WorldConfig = DEFAULT_CONFIG):
    """Closed-form spillage hazard; accepts scalars or broadcastable arrays."""
    fu = np.asarray(fu, dtype=float)
    rd = np.asarray(rd, dtype=float)
    rv = np.asarray(rv, dtype=float)
    p_rim = _logistic((fu - (config.rim_slope * rd + config.rim_intercept))
                      / config.rim_width)
    ramp = np.clip((rv - config.bounce_lo) / (config.bounce_hi - config.bounce_lo),
                   0.0, 1.0)
    p_bounce = config.bounce_gain * ramp
    p_over = _logistic((rv - config.overflow_margin) / config.overflow_width)
    p = 1.0 - (1.0 - p_over) * (1.0 - p_bounce) * (1.0 - p_rim)
    return float(p) if p.ndim == 0 else p


def _logistic(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=float)))


def resolve_spillage(fu, rd, rv, rng, config: WorldConfig = DEFAULT_CONFIG) -> bool:
    return bool(rng.random() < spillage_probability(fu, rd, rv, config))


def _trial_rngs(seed, n):
    return [np.random.Generator(np.random.PCG64(s))
            for s in np.random.SeedSequence(seed).spawn(n)]


def generate_dataset(n, seed=None, config: WorldConfig = DEFAULT_CONFIG) -> list[Trial]:
    """Simulate ``n`` independent trials.

    Each trial runs on its own generator spawned from one seed sequence,
    so generation could be chunked across workers without changing the
    output.
    """
    if n < 1:
        raise WorldError("need n >= 1 trials")
    seed = config.seed if seed is None else seed
    trials = []
    for rng in _trial_rngs(seed, n):
        rc, fu, rd = sample_parameters(rng)
        rv = derive_rv(rc, fu, rng, config)
        spill = resolve_spillage(fu, rd, rv, rng, config)
        trials.append(Trial(rc, fu, rd, rv, spill))
    return trials


def replay(trial: Trial, overrides, replications, seed,
           config: WorldConfig = DEFAULT_CONFIG) -> int:
    """Re-run a trial with some parameters overridden.

    ``overrides`` maps a subset of {"rc","fu","rd"} to new values. The fill
    fraction is re-derived per replication with fresh packing noise.
    Returns the number of replications without spillage.
    """
    unknown = set(overrides) - {"rc", "fu", "rd"}
    if unknown:
        raise WorldError(f"cannot override {sorted(unknown)}")
    if replications == 0:
        return 0
    rc = overrides.get("rc", trial.rc)
    fu = overrides.get("fu", trial.fu)
    rd = overrides.get("rd", trial.rd)
    successes = 0
    for rng in _trial_rngs(seed, replications):
        rv = derive_rv(rc, fu, rng, config)
        if not resolve_spillage(fu, rd, rv, rng, config):
            successes += 1
    return successes


# -- canonical graph over the task variables -------------------------------

def pouring_graph() -> CausalGraph:
    """The data-generating DAG: RC->RV, FU->RV, FU->S, RD->S, RV->S."""
    return CausalGraph.build(
        nodes=[("RC", Continuous(RC_SUPPORT)), ("FU", Continuous(FU_SUPPORT)),
               ("RD", Continuous(RD_SUPPORT)), ("RV", Continuous(RV_SUPPORT)),
               ("S", Binary())],
        edges=[("RC", "RV"), ("FU", "RV"), ("FU", "S"), ("RD", "S"), ("RV", "S")],
    )


def pouring_tier_groups() -> list[list[str]]:
    """Temporal tiers: action parameters, then fill fraction, then outcome."""
    return [["RC", "FU", "RD"], ["RV"], ["S"]]


COLUMN_TO_NODE = {"rc": "RC", "fu": "FU", "rd": "RD", "rv": "RV", "spillage": "S"}
NODE_TO_COLUMN = {v: k for k, v in COLUMN_TO_NODE.items()}


def trial_columns(trials) -> dict[str, np.ndarray]:
    """Column arrays keyed by node name, with spillage as 0/1 floats."""
    return {
        "RC": np.array([t.rc for t in trials]),
        "FU": np.array([t.fu for t in trials]),
        "RD": np.array([t.rd for t in trials]),
        "RV": np.array([t.rv for t in trials]),
        "S": np.array([float(t.spillage) for t in trials]),
    }


def trial_context(trial: Trial) -> dict[str, float]:
    """Observed values of every non-outcome node."""
    return {"RC": trial.rc, "FU": trial.fu, "RD": trial.rd, "RV": trial.rv}


# -- dataset files ----------------------------------------------------------

def save_csv(trials, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for t in trials:
            writer.writerow([repr(t.rc), repr(t.fu), repr(t.rd), repr(t.rv),
                             int(t.spillage)])


def load_csv(path) -> list[Trial]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CSV_HEADER:
            raise WorldError(f"expected header {CSV_HEADER}, got {header}")
        trials = []
        for row in reader:
            if len(row) != 5:
                raise WorldError(f"malformed row: {row}")
            rc, fu, rd, rv = map(float, row[:4])
            trials.append(Trial(rc, fu, rd, rv, bool(int(row[4]))))
    if not trials:
        raise WorldError(f"{path} holds no trials")
    return trials


def save_jsonl(trials, path) -> None:
    with open(path, "w") as fh:
        for t in trials:
            fh.write(json.dumps({"rc": t.rc, "fu": t.fu, "rd": t.rd,
                                 "rv": t.rv, "spillage": int(t.spillage)}))
            fh.write("\n")


def load_jsonl(path) -> list[Trial]:
    trials = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            trials.append(Trial(rec["rc"], rec["fu"], rec["rd"], rec["rv"],
                                bool(rec["spillage"])))
    if not trials:
        raise WorldError(f"{path} holds no trials")
    return trials


def config_from_dict(payload: dict) -> WorldConfig:
    try:
        return replace(DEFAULT_CONFIG, **payload)
    except TypeError as exc:
        raise WorldError(f"unknown world-config field: {exc}") from exc
