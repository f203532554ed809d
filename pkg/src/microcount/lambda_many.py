"""Microstate-counting probabilities.

The probability of a projector P in an expansion is the fraction of
microstates in its range. Microstates that are neither in the range nor the
kernel (Cat states) widen this into an interval [in/n, (n - kernel)/n].
Counts are exact integers and the bounds exact Fractions; only the comparison
with the Born quantity touches floating point.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    ContainmentError,
    DimensionError,
    InvarianceError,
    UnverifiedExpansionError,
    ZeroStateError,
)
from .expansion import (
    CLASSIFY_EPS,
    AdaptedExpansion,
    BranchExpansion,
    Classification,
    Expansion,
    VerificationReport,
    adapted_expand,
    classify_rows,
    verify_expansion,
)
from .linalg import Projector, StateVector, SubspaceProjector, Unitary

CONTAINMENT_SLACK = 1e-12


@dataclass(frozen=True)
class ImpreciseProbability:
    lower: Fraction
    upper: Fraction
    n: int
    cat_count: int

    def __post_init__(self):
        if not 0 <= self.lower <= self.upper <= 1:
            raise ValueError(f"invalid bounds [{self.lower}, {self.upper}]")
        if self.upper - self.lower != Fraction(self.cat_count, self.n):
            raise ValueError("width must equal cat_count / n")

    @property
    def width(self) -> Fraction:
        return self.upper - self.lower

    @property
    def is_precise(self) -> bool:
        return self.lower == self.upper

    def contains(self, value: float, slack: float = CONTAINMENT_SLACK) -> bool:
        return float(self.lower) - slack <= value <= float(self.upper) + slack

    def complement(self) -> ImpreciseProbability:
        """Bounds for I - P from the same expansion."""
        return ImpreciseProbability(1 - self.upper, 1 - self.lower, self.n, self.cat_count)

    def to_json(self) -> dict:
        return {
            "lower": {"num": self.lower.numerator, "den": self.lower.denominator},
            "upper": {"num": self.upper.numerator, "den": self.upper.denominator},
            "n": self.n,
            "cat_count": self.cat_count,
        }


def _expansion_of(e) -> Expansion:
    if isinstance(e, (AdaptedExpansion, BranchExpansion)):
        return e.expansion
    return e


def probability_bounds(e, P: Projector, eps: float = CLASSIFY_EPS) -> ImpreciseProbability:
    """[#in-range / n, (n - #in-kernel) / n] for P over the microstates of ``e``."""
    exp = _expansion_of(e)
    if not exp.report.passed:
        raise UnverifiedExpansionError("; ".join(exp.report.failures))
    n = exp.n
    if isinstance(e, AdaptedExpansion) and P is e.target:
        m_in, m_ker = e.counts.in_range, e.counts.in_kernel
    else:
        classes = classify_rows(exp.matrix, P, eps)
        m_in = classes.count(Classification.IN_RANGE)
        m_ker = classes.count(Classification.IN_KERNEL)
    return ImpreciseProbability(Fraction(m_in, n), Fraction(n - m_ker, n), n, n - m_in - m_ker)


def born_quantity(psi, P: Projector) -> float:
    """||P psi||^2 / ||psi||^2."""
    psi = StateVector(psi)
    if psi.norm_sq == 0.0:
        raise ZeroStateError("Born quantity of the zero state")
    pv = P.apply(psi.amplitudes)
    return min(1.0, max(0.0, float(np.vdot(pv, pv).real) / psi.norm_sq))


@dataclass(frozen=True)
class ContainmentReport:
    bounds: ImpreciseProbability
    born: float
    holds: bool


def containment_check(psi, P: Projector, n: int, slack: float = CONTAINMENT_SLACK) -> ContainmentReport:
    """Build an adapted expansion and confirm its bounds contain the Born quantity.

    Raises ContainmentError when they do not.
    """
    ae = adapted_expand(psi, P, n)
    bounds = probability_bounds(ae, P)
    born = born_quantity(psi, P)
    report = ContainmentReport(bounds, born, bounds.contains(born, slack))
    if not report.holds:
        raise ContainmentError(f"Born value {born!r} outside [{bounds.lower}, {bounds.upper}] at n = {n}")
    return report


def convergence_sweep(psi, P: Projector, n_schedule: Sequence[int]) -> list[ImpreciseProbability]:
    """Adapted-expansion bounds for each n in an increasing schedule."""
    psi = StateVector(psi)
    schedule = list(n_schedule)
    if any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise ValueError("schedule must be strictly increasing")
    if schedule and schedule[-1] > psi.dim:
        raise DimensionError(f"schedule reaches n = {schedule[-1]} beyond dim = {psi.dim}")
    return [probability_bounds(adapted_expand(psi, P, n), P) for n in schedule]


SWEEP_COLUMNS = ("n", "lower_num", "lower_den", "upper_num", "upper_den", "born", "width")


def sweep_rows(bounds: Iterable[ImpreciseProbability], born: float) -> list[dict]:
    return [
        {
            "n": b.n,
            "lower_num": b.lower.numerator,
            "lower_den": b.lower.denominator,
            "upper_num": b.upper.numerator,
            "upper_den": b.upper.denominator,
            "born": repr(born),
            "width": repr(float(b.width)),
        }
        for b in bounds
    ]


def sweep_csv(bounds: Iterable[ImpreciseProbability], born: float) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(sweep_rows(bounds, born))
    return buf.getvalue()


@dataclass(frozen=True)
class InvarianceReport:
    passed: bool
    transformed: Expansion
    verification: VerificationReport
    fixed_fraction: Fraction
    classifications_preserved: bool
    skipped_projectors: tuple[str, ...] = ()


def invariance_test(
    e: Expansion,
    U: Unitary,
    phi_index: int,
    projectors: dict[str, Projector] | None = None,
    tol: float = 1e-9,
) -> InvarianceReport:
    """Check that a unitary fixing microstate ``phi_index`` leaves its counted probability alone.

    The transformed family {U xi_j} must be a valid expansion of U psi; the
    fixed microstate keeps fraction 1/n; and against every given projector
    that commutes with U, each microstate keeps its classification.
    Projectors that do not commute with U are listed as skipped.
    """
    e = _expansion_of(e)
    phi = e.matrix[phi_index]
    if np.linalg.norm(U.apply(phi) - phi) > tol * np.linalg.norm(phi):
        raise InvarianceError(f"U does not fix microstate {phi_index}")
    moved = e.transformed(U)
    report = verify_expansion(moved)

    fixed_bounds = probability_bounds(moved, SubspaceProjector.ray(moved.matrix[phi_index])) if report.passed else None
    fixed_fraction = fixed_bounds.lower if fixed_bounds and fixed_bounds.is_precise else Fraction(-1)

    preserved = True
    skipped = []
    for name, P in (projectors or {}).items():
        if not U.commutes_with(P):
            skipped.append(name)
            continue
        if classify_rows(e.matrix, P) != classify_rows(moved.matrix, P):
            preserved = False
    passed = report.passed and fixed_fraction == Fraction(1, e.n) and preserved
    return InvarianceReport(passed, moved, report, fixed_fraction, preserved, tuple(skipped))


def microstate_fractions(e: Expansion) -> list[ImpreciseProbability]:
    """Bounds for the ray projector of each microstate; all should be exactly 1/n."""
    e = _expansion_of(e)
    return [probability_bounds(e, SubspaceProjector.ray(row)) for row in e.matrix]
