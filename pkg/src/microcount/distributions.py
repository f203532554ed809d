"""Two-party outcome distributions over (s, t) in {+1, -1}^2."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Union

Number = Union[Fraction, float]
Outcome = tuple[int, int]

OUTCOMES: tuple[Outcome, ...] = ((1, 1), (1, -1), (-1, 1), (-1, -1))
SIGNS = (1, -1)


def outcome_key(o: Outcome) -> str:
    return "".join("+" if x > 0 else "-" for x in o)


def parse_outcome_key(key: str) -> Outcome:
    if len(key) != 2 or any(ch not in "+-" for ch in key):
        raise ValueError(f"bad outcome key {key!r}")
    return tuple(1 if ch == "+" else -1 for ch in key)  # type: ignore[return-value]


def number_to_json(x: Number):
    if isinstance(x, Fraction):
        return {"num": x.numerator, "den": x.denominator}
    return float(x)


@dataclass(frozen=True)
class JointDistribution:
    """p(s, t) on the labeled support plus optional error information.

    ``lower``/``upper`` bound each cell when microstate counting leaves Cat
    microstates; ``stderr`` holds Monte Carlo standard errors; ``cat_mass``
    is the excluded fraction.
    """

    cells: Mapping[Outcome, Number]
    provenance: str
    cat_mass: Number = 0
    lower: Mapping[Outcome, Number] | None = None
    upper: Mapping[Outcome, Number] | None = None
    stderr: Mapping[Outcome, float] | None = None
    extra: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if set(self.cells) != set(OUTCOMES):
            raise ValueError(f"cells must cover {OUTCOMES}")
        if any(v < 0 for v in self.cells.values()):
            raise ValueError("negative probability")
        total = sum(self.cells.values())
        if self.exact:
            if total != 1:
                raise ValueError(f"cells sum to {total}")
        elif not math.isclose(float(total), 1.0, abs_tol=1e-9):
            raise ValueError(f"cells sum to {total}")

    @property
    def exact(self) -> bool:
        return all(isinstance(v, Fraction) for v in self.cells.values())

    def __getitem__(self, o: Outcome) -> Number:
        return self.cells[o]

    def bounds(self, o: Outcome) -> tuple[Number, Number]:
        if self.lower is None or self.upper is None:
            return self.cells[o], self.cells[o]
        return self.lower[o], self.upper[o]

    def to_json(self) -> dict:
        doc = {
            "provenance": self.provenance,
            "cells": {outcome_key(o): number_to_json(self.cells[o]) for o in OUTCOMES},
            "cat_mass": number_to_json(self.cat_mass),
        }
        if self.lower is not None and self.upper is not None:
            doc["lower"] = {outcome_key(o): number_to_json(self.lower[o]) for o in OUTCOMES}
            doc["upper"] = {outcome_key(o): number_to_json(self.upper[o]) for o in OUTCOMES}
        if self.stderr is not None:
            doc["stderr"] = {outcome_key(o): float(self.stderr[o]) for o in OUTCOMES}
        return doc


def marginals(jd: JointDistribution) -> tuple[dict[int, Number], dict[int, Number]]:
    """(Alice p(s), Bob p(t)) as sums of the joint cells."""
    alice = {s: jd[(s, 1)] + jd[(s, -1)] for s in SIGNS}
    bob = {t: jd[(1, t)] + jd[(-1, t)] for t in SIGNS}
    return alice, bob


@dataclass(frozen=True)
class Conditional:
    """Alice's p(s | t); ``undefined`` when p(t) = 0."""

    given: int
    probs: Mapping[int, Number] | None
    undefined: bool

    def __getitem__(self, s: int) -> Number:
        if self.undefined:
            raise KeyError(f"conditional on zero-probability outcome t = {self.given:+d}")
        return self.probs[s]


def conditional(jd: JointDistribution, t: int) -> Conditional:
    if t not in SIGNS:
        raise ValueError(f"outcome must be +1 or -1, got {t!r}")
    p_t = jd[(1, t)] + jd[(-1, t)]
    if p_t == 0:
        return Conditional(t, None, True)
    return Conditional(t, {s: jd[(s, t)] / p_t for s in SIGNS}, False)


def correlation_of(jd: JointDistribution) -> Number:
    """E = sum of s t p(s, t)."""
    return sum(s * t * jd[(s, t)] for s, t in OUTCOMES)
