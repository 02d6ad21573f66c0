"""Joint probabilities from chains of conditionals over finite outcome sets.

A chain is an ordered list of events.  Factor ``k`` stores, for every
history of outcomes of events ``0..k-1``, a probability vector over the
outcomes of event ``k``.  Histories are tuples of outcome labels; the root
history is ``()``.
"""

import itertools
import json
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .errors import InputError

SUM_TOL = 1e-12


@dataclass(frozen=True)
class Factor:
    name: str
    outcomes: tuple
    table: dict  # history tuple -> tuple of probabilities
    fallback: bool = False

    def probs(self, history):
        try:
            return self.table[tuple(history)]
        except KeyError:
            raise InputError(f"factor {self.name!r} has no entry for history {tuple(history)!r}") from None


@dataclass(frozen=True)
class EventChain:
    factors: tuple = field(default_factory=tuple)

    def __post_init__(self):
        factors = tuple(self.factors)
        object.__setattr__(self, "factors", factors)
        for k, f in enumerate(factors):
            if len(set(f.outcomes)) != len(f.outcomes) or not f.outcomes:
                raise InputError(f"event {f.name!r} needs distinct, non-empty outcome labels")
            expected = set(itertools.product(*(g.outcomes for g in factors[:k])))
            if set(f.table) != expected:
                raise InputError(f"event {f.name!r} must have one row per history of its predecessors")
            for hist, p in f.table.items():
                p = np.asarray(p, dtype=float)
                if p.shape != (len(f.outcomes),):
                    raise InputError(f"event {f.name!r}, history {hist!r}: wrong number of probabilities")
                if np.any(p < 0) or np.any(p > 1):
                    raise InputError(f"event {f.name!r}, history {hist!r}: probabilities outside [0, 1]")
                if abs(p.sum() - 1.0) > SUM_TOL:
                    raise InputError(f"event {f.name!r}, history {hist!r}: probabilities sum to {p.sum()!r}")

    @property
    def events(self):
        return tuple(f.name for f in self.factors)

    def __len__(self):
        return len(self.factors)

    def paths(self):
        """All full outcome paths in lexicographic (declaration) order."""
        return itertools.product(*(f.outcomes for f in self.factors))

    # ---- serialization --------------------------------------------------
    def to_dict(self):
        return {
            "events": [
                {
                    "name": f.name,
                    "outcomes": list(f.outcomes),
                    "fallback": f.fallback,
                    "table": {"|".join(h): list(p) for h, p in f.table.items()},
                }
                for f in self.factors
            ]
        }

    @classmethod
    def from_dict(cls, doc):
        try:
            events = doc["events"]
        except (KeyError, TypeError):
            raise InputError("chain document needs an 'events' list") from None
        factors = []
        for ev in events:
            try:
                outcomes = tuple(str(o) for o in ev["outcomes"])
                table = {}
                for key, p in ev["table"].items():
                    hist = tuple(key.split("|")) if key else ()
                    table[hist] = tuple(float(v) for v in p)
                factors.append(Factor(str(ev["name"]), outcomes, table, bool(ev.get("fallback", False))))
            except (KeyError, AttributeError, TypeError, ValueError) as exc:
                raise InputError(f"malformed event entry: {exc}") from None
        return cls(tuple(factors))

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text):
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise InputError(f"chain is not valid JSON: {exc}") from None


def make_chain(spec):
    """Build a chain from ``[(name, outcomes, table), ...]``; a root table may be a bare vector."""
    factors = []
    for k, (name, outcomes, table) in enumerate(spec):
        if k == 0 and not isinstance(table, dict):
            table = {(): table}
        table = {tuple(h): tuple(float(v) for v in p) for h, p in table.items()}
        factors.append(Factor(name, tuple(outcomes), table))
    return EventChain(tuple(factors))


def joint_probability(chain, outcome_path):
    """Product of conditional probabilities along ``outcome_path``."""
    path = tuple(outcome_path)
    if len(path) != len(chain):
        raise InputError(f"path has {len(path)} outcomes, chain has {len(chain)} events")
    prob = 1.0
    for k, (f, label) in enumerate(zip(chain.factors, path)):
        if label not in f.outcomes:
            raise InputError(f"unknown outcome {label!r} for event {f.name!r}")
        prob *= f.probs(path[:k])[f.outcomes.index(label)]
    return prob


def joint_table(chain):
    """Mapping full path -> joint probability."""
    return {path: joint_probability(chain, path) for path in chain.paths()}


class ZeroEntry(NamedTuple):
    event: str
    history: tuple
    outcome: str


def zero_probability_audit(chain):
    """Every (history, outcome) whose conditional probability is exactly zero."""
    found = []
    for f in chain.factors:
        for hist in sorted(f.table):
            for label, p in zip(f.outcomes, f.table[hist]):
                if p == 0.0:
                    found.append(ZeroEntry(f.name, hist, label))
    return found


def max_entropy_fallback(chain, position, marginal):
    """Replace the conditional at ``position`` by ``marginal`` for every history.

    ``marginal`` maps outcome label -> probability, or is a sequence in the
    factor's outcome order.  The factor is flagged as a fallback.
    """
    if not 0 <= position < len(chain):
        raise InputError(f"position {position} outside chain of length {len(chain)}")
    f = chain.factors[position]
    if isinstance(marginal, dict):
        if set(marginal) != set(f.outcomes):
            raise InputError(f"marginal outcomes {sorted(marginal)} do not match {list(f.outcomes)}")
        probs = tuple(float(marginal[o]) for o in f.outcomes)
    else:
        probs = tuple(float(v) for v in marginal)
        if len(probs) != len(f.outcomes):
            raise InputError("marginal has the wrong number of outcomes")
    new = replace(f, table={h: probs for h in f.table}, fallback=True)
    factors = list(chain.factors)
    factors[position] = new
    return EventChain(tuple(factors))


@dataclass(frozen=True)
class LossSpec:
    outcomes: tuple
    losses: tuple

    def __post_init__(self):
        if len(self.outcomes) != len(self.losses):
            raise InputError("one loss per outcome is required")

    def as_dict(self):
        return dict(zip(self.outcomes, self.losses))


def expected_loss(chain, loss):
    """Sum over full paths of joint probability times the loss of the terminal outcome."""
    table = loss.as_dict()
    last = chain.factors[-1]
    missing = set(last.outcomes) - set(table)
    if missing:
        raise InputError(f"loss does not cover outcomes {sorted(missing)}")
    total = 0.0
    for path in chain.paths():
        total += joint_probability(chain, path) * table[path[-1]]
    return total


# ---- illustrative demo chains -------------------------------------------
# The numbers below are made up for demonstration; they are not estimates.

SWAN_COLOURS = ("red", "orange", "yellow", "green", "blue", "indigo", "violet", "white", "black")


def swan_chain():
    """Bird type then colour, with a colour model certain that swans are white."""
    certain_white = tuple(1.0 if c == "white" else 0.0 for c in SWAN_COLOURS)
    other_birds = (0.06, 0.04, 0.1, 0.15, 0.1, 0.02, 0.03, 0.2, 0.3)
    return make_chain([
        ("bird", ("swan", "other"), (0.01, 0.99)),
        ("colour", SWAN_COLOURS, {("swan",): certain_white, ("other",): other_birds}),
    ])


def swan_abundance_marginal():
    """Colour abundance over all birds, used as the fallback for Pr(colour | swan)."""
    return dict(zip(SWAN_COLOURS, (0.06, 0.04, 0.1, 0.15, 0.1, 0.02, 0.03, 0.21, 0.29)))


def pandemic_chain():
    """Pandemic severity followed by economic disruption severity."""
    levels = ("none", "mild", "severe")
    return make_chain([
        ("pandemic", levels, (0.90, 0.08, 0.02)),
        ("disruption", levels, {
            ("none",): (0.95, 0.049, 0.001),
            ("mild",): (0.60, 0.35, 0.05),
            ("severe",): (0.10, 0.40, 0.50),
        }),
    ])


def pandemic_loss():
    return LossSpec(("none", "mild", "severe"), (0.0, 1.0, 20.0))
