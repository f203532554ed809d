"""Two-spin EPRB scenarios under Born, counting and lambda-one backends.

The full state is ordered (spin_A ⊗ ancilla_A) ⊗ (spin_B ⊗ ancilla_B), so
Alice's and Bob's factors are contiguous and every outcome projector is a
left ⊗ right product. Ancillas start in their first basis vector; they only
supply room for many equal-norm microstates per branch.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import reduce
from typing import Iterable, Mapping, Sequence

import numpy as np

from .distributions import (
    OUTCOMES,
    SIGNS,
    JointDistribution,
    Number,
    conditional,
    correlation_of,
    marginals,
    number_to_json,
)
from .errors import ExpansionError, ScenarioError
from .expansion import BranchExpansion, adapted_expand, grid_allocation, product_adapted_expand, product_grid
from .hidden_variable import (
    LambdaOne,
    LocalBaseline,
    SuperpositionEnsemble,
    measurement_independence_check,
    monte_carlo,
)
from .lambda_many import probability_bounds
from .linalg import (
    IdentityProjector,
    Projector,
    ProjectorSum,
    StateVector,
    TensorProjector,
    spin_projector,
    unit_direction,
)

ALICE_SETTINGS = ("a", "a'")
BOB_SETTINGS = ("b", "b'")
SETTING_PAIRS = tuple((x, y) for x in ALICE_SETTINGS for y in BOB_SETTINGS)
DEFAULT_ANCILLA = (64, 64)
DEFAULT_TOLERANCE = 1e-12
MC_SIGMAS = 4.0


class Backend(enum.Enum):
    BORN = "born"
    COUNTING = "counting"
    MONTE_CARLO = "montecarlo"


def planar(theta: float) -> np.ndarray:
    """Unit vector at angle ``theta`` (radians) from z in the x-z plane."""
    return np.array([math.sin(theta), 0.0, math.cos(theta)])


def singlet() -> StateVector:
    """(|up down> - |down up>) / sqrt(2) in the z basis."""
    return StateVector(np.array([0.0, 1.0, -1.0, 0.0]) / math.sqrt(2.0))


def spin_up(direction) -> StateVector:
    """The +1 eigenvector of spin along ``direction``."""
    return StateVector(spin_projector(direction, 1).range_basis[:, 0])


def product_spin_state(alice, bob) -> StateVector:
    """Normalized alice ⊗ bob for two single-spin vectors."""
    return StateVector(np.kron(StateVector(alice).normalized().amplitudes, StateVector(bob).normalized().amplitudes))


def photon_box_state() -> StateVector:
    """(found_A ⊗ empty_B + empty_A ⊗ found_B) / sqrt(2)."""
    return StateVector(np.array([0.0, 1.0, 1.0, 0.0]) / math.sqrt(2.0))


@dataclass(frozen=True, eq=False)
class EPRBScenario:
    a: np.ndarray
    a_prime: np.ndarray
    b: np.ndarray
    b_prime: np.ndarray
    spin_state: StateVector = field(default_factory=singlet)
    ancilla_dims: tuple[int, int] = DEFAULT_ANCILLA
    n: int | None = None
    backend: Backend = Backend.BORN
    trials: int | None = None
    seed: int | None = None

    def __post_init__(self):
        for name in ("a", "a_prime", "b", "b_prime"):
            try:
                object.__setattr__(self, name, unit_direction(getattr(self, name)))
            except ValueError as exc:
                raise ScenarioError(f"setting {name}: {exc}") from exc
        state = StateVector(self.spin_state)
        if state.dim != 4:
            raise ScenarioError(f"spin state must have dim 4, got {state.dim}")
        if state.norm_sq == 0.0:
            raise ScenarioError("spin state is zero")
        object.__setattr__(self, "spin_state", state.normalized())
        d_a, d_b = self.ancilla_dims
        if int(d_a) < 1 or int(d_b) < 1:
            raise ScenarioError("ancilla dims must be at least 1")
        object.__setattr__(self, "ancilla_dims", (int(d_a), int(d_b)))
        backend = Backend(self.backend)
        object.__setattr__(self, "backend", backend)
        if backend is Backend.COUNTING or backend is Backend.MONTE_CARLO:
            if self.n is None or self.n < 2:
                raise ScenarioError(f"{backend.value} backend needs n >= 2")
            if self.n > self.dim:
                raise ScenarioError(f"n = {self.n} exceeds state dim {self.dim}")
        if backend is Backend.MONTE_CARLO:
            if self.trials is None or self.trials < 1:
                raise ScenarioError("montecarlo backend needs trials >= 1")
            if self.seed is None:
                raise ScenarioError("montecarlo backend needs a seed")

    @classmethod
    def from_angles(cls, angles_deg: Sequence[float], **kw) -> EPRBScenario:
        """Planar settings from (a, a', b, b') angles in degrees."""
        if len(angles_deg) != 4:
            raise ScenarioError("need four angles: a, a', b, b'")
        if not all(math.isfinite(x) for x in angles_deg):
            raise ScenarioError(f"angles must be finite, got {list(angles_deg)}")
        return cls(*(planar(math.radians(x)) for x in angles_deg), **kw)

    def with_(self, **kw) -> EPRBScenario:
        return replace(self, **kw)

    @property
    def side_dims(self) -> tuple[int, int]:
        return 2 * self.ancilla_dims[0], 2 * self.ancilla_dims[1]

    @property
    def dim(self) -> int:
        return 4 * self.ancilla_dims[0] * self.ancilla_dims[1]

    @property
    def state(self) -> StateVector:
        d_a, d_b = self.ancilla_dims
        anc_a = np.zeros(d_a)
        anc_a[0] = 1.0
        anc_b = np.zeros(d_b)
        anc_b[0] = 1.0
        psi = np.einsum("ij,a,b->iajb", self.spin_state.amplitudes.reshape(2, 2), anc_a, anc_b)
        return StateVector(psi.reshape(-1))

    def direction(self, setting: str) -> np.ndarray:
        table = {"a": self.a, "a'": self.a_prime, "b": self.b, "b'": self.b_prime}
        if setting not in table:
            raise ScenarioError(f"unknown setting {setting!r}")
        return table[setting]

    def context(self, alice: str, bob: str) -> tuple[tuple[float, ...], tuple[float, ...]]:
        _check_pair(alice, bob)
        return tuple(self.direction(alice)), tuple(self.direction(bob))

    def side_projectors(self, setting: str) -> dict[int, Projector]:
        """P_s ⊗ I on one side's (spin ⊗ ancilla) factor, for s = +1, -1."""
        d_anc = self.ancilla_dims[0] if setting in ALICE_SETTINGS else self.ancilla_dims[1]
        return {s: TensorProjector(spin_projector(self.direction(setting), s), IdentityProjector(d_anc)) for s in SIGNS}

    def alice_projector(self, setting: str, s: int) -> Projector:
        """Alice's outcome projector on the full space."""
        return TensorProjector(self.side_projectors(setting)[s], IdentityProjector(self.side_dims[1]))

    def bob_projector(self, setting: str, t: int) -> Projector:
        return TensorProjector(IdentityProjector(self.side_dims[0]), self.side_projectors(setting)[t])

    def branches(self, alice: str, bob: str) -> dict[tuple[int, int], tuple[Projector, Projector]]:
        _check_pair(alice, bob)
        left = self.side_projectors(alice)
        right = self.side_projectors(bob)
        return {(s, t): (left[s], right[t]) for s, t in OUTCOMES}

    def joint_projector(self, alice: str, bob: str, s: int, t: int) -> Projector:
        left, right = self.branches(alice, bob)[(s, t)]
        return TensorProjector(left, right)


def _check_pair(alice: str, bob: str) -> None:
    if alice not in ALICE_SETTINGS or bob not in BOB_SETTINGS:
        raise ScenarioError(f"invalid setting pair ({alice!r}, {bob!r})")


def branch_expansion(sc: EPRBScenario, alice: str, bob: str, n: int | None = None) -> BranchExpansion:
    n = sc.n if n is None else n
    if n is None:
        raise ScenarioError("counting needs n")
    d_left, d_right = sc.side_dims
    return product_adapted_expand(
        sc.state, sc.branches(alice, bob), d_left, d_right, n, context=sc.context(alice, bob)
    )


def _born(psi: StateVector, P: Projector) -> float:
    v = P.apply(psi.amplitudes)
    return float(np.vdot(v, v).real) / psi.norm_sq


def _pair_key(alice: str, bob: str) -> tuple[int, int]:
    return ALICE_SETTINGS.index(alice), BOB_SETTINGS.index(bob)


def joint_distribution(sc: EPRBScenario, alice: str, bob: str, backend: Backend | str | None = None) -> JointDistribution:
    backend = sc.backend if backend is None else Backend(backend)
    _check_pair(alice, bob)
    if backend is Backend.BORN:
        psi = sc.state
        cells = {o: _born(psi, sc.joint_projector(alice, bob, *o)) for o in OUTCOMES}
        total = sum(cells.values())
        return JointDistribution({o: v / total for o, v in cells.items()}, "born")
    if backend is Backend.COUNTING:
        be = branch_expansion(sc, alice, bob)
        labeled = be.n - be.cat_count
        if labeled == 0:
            raise ExpansionError("every microstate is a Cat")
        bounds = {o: probability_bounds(be, be.branch_projector(o)) for o in OUTCOMES}
        return JointDistribution(
            cells={o: Fraction(be.counts[o], labeled) for o in OUTCOMES},
            provenance="counting",
            cat_mass=Fraction(be.cat_count, be.n),
            lower={o: b.lower for o, b in bounds.items()},
            upper={o: b.upper for o, b in bounds.items()},
            extra={"n": be.n, "expansion": be},
        )
    be = branch_expansion(sc, alice, bob)
    ej = monte_carlo(LambdaOne(be), sc.trials, sc.seed, key=_pair_key(alice, bob))
    jd = ej.joint()
    return replace(jd, extra={"empirical": ej, "n": be.n})


def marginal_bounds(sc: EPRBScenario, side: str, setting: str, backend: Backend | str | None = None) -> dict[int, tuple[Number, Number]]:
    """Local marginal computed from P_s ⊗ I alone, with no reference to the remote setting.

    Born gives a point value; counting uses an expansion adapted to the
    local projector and returns its exact bounds.
    """
    backend = sc.backend if backend is None else Backend(backend)
    proj = sc.alice_projector if side == "alice" else sc.bob_projector
    psi = sc.state
    out = {}
    for s in SIGNS:
        P = proj(setting, s)
        if backend is Backend.COUNTING:
            b = probability_bounds(adapted_expand(psi, P, sc.n), P)
            out[s] = (b.lower, b.upper)
        else:
            v = _born(psi, P)
            out[s] = (v, v)
    return out


@dataclass(frozen=True)
class Condition:
    name: str
    holds: str  # "yes", "no" or "width-limited"
    lhs: object
    rhs: object
    deviation: Number
    tolerance: float

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "holds": self.holds,
            "lhs": _jsonable(self.lhs),
            "rhs": _jsonable(self.rhs),
            "deviation": number_to_json(self.deviation),
            "tolerance": self.tolerance,
        }


def _jsonable(x):
    if isinstance(x, (Fraction, float, int)) and not isinstance(x, bool):
        return number_to_json(x)
    if isinstance(x, Mapping):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


@dataclass(frozen=True)
class CHSHResult:
    value: Number
    lower: Number
    upper: Number
    correlations: Mapping[tuple[str, str], Number]
    stderr: float | None = None
    provenance: str = ""

    def to_json(self) -> dict:
        doc = {
            "provenance": self.provenance,
            "S": number_to_json(self.value),
            "S_lower": number_to_json(self.lower),
            "S_upper": number_to_json(self.upper),
            "correlations": {f"{x},{y}": number_to_json(v) for (x, y), v in self.correlations.items()},
        }
        if self.stderr is not None:
            doc["stderr"] = self.stderr
        return doc


@dataclass(frozen=True)
class ConditionReport:
    backend: str
    conditions: tuple[Condition, ...]
    chsh: CHSHResult
    extra: Mapping[str, object] = field(default_factory=dict)

    def __getitem__(self, name: str) -> Condition:
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_json(self) -> dict:
        return {
            "backend": self.backend,
            "conditions": [c.to_json() for c in self.conditions],
            "chsh": self.chsh.to_json(),
            "extra": _jsonable(dict(self.extra)),
        }


def correlation_bounds(sc: EPRBScenario, alice: str, bob: str, jd: JointDistribution | None = None) -> tuple[Number, Number]:
    """Bounds on E for the backend: E = 2 p(same) - 1, p(same) from Pi(+,+) + Pi(-,-)."""
    jd = joint_distribution(sc, alice, bob) if jd is None else jd
    if jd.provenance == "counting":
        be = jd.extra["expansion"]
        same = ProjectorSum([be.branch_projector((1, 1)), be.branch_projector((-1, -1))])
        b = probability_bounds(be, same)
        return 2 * b.lower - 1, 2 * b.upper - 1
    e = correlation_of(jd)
    if jd.stderr is not None:
        half = MC_SIGMAS * _correlation_stderr(jd)
        return e - half, e + half
    return e, e


def _correlation_stderr(jd: JointDistribution) -> float:
    ej = jd.extra.get("empirical")
    e = float(correlation_of(jd))
    n = ej.labeled if ej is not None else 1
    return math.sqrt(max(1.0 - e * e, 0.0) / n)


def correlation(sc: EPRBScenario, alice: str, bob: str, backend: Backend | str | None = None) -> Number:
    """E = sum of s t p(s, t)."""
    return correlation_of(joint_distribution(sc, alice, bob, backend))


def _abs_interval(lo: Number, hi: Number) -> tuple[Number, Number]:
    if lo >= 0:
        return lo, hi
    if hi <= 0:
        return -hi, -lo
    return 0, max(-lo, hi)


def _chsh_from(joints: Mapping[tuple[str, str], JointDistribution], sc: EPRBScenario) -> CHSHResult:
    signs = {("a", "b"): 1, ("a", "b'"): -1, ("a'", "b"): 1, ("a'", "b'"): 1}
    es = {p: correlation_of(jd) for p, jd in joints.items()}
    value = abs(sum(signs[p] * es[p] for p in SETTING_PAIRS))
    lo = hi = 0
    for p in SETTING_PAIRS:
        e_lo, e_hi = correlation_bounds(sc, *p, jd=joints[p])
        if signs[p] > 0:
            lo, hi = lo + e_lo, hi + e_hi
        else:
            lo, hi = lo - e_hi, hi - e_lo
    lower, upper = _abs_interval(lo, hi)
    first = next(iter(joints.values()))
    stderr = None
    if first.stderr is not None:
        stderr = math.sqrt(sum(_correlation_stderr(jd) ** 2 for jd in joints.values()))
    return CHSHResult(value, lower, upper, es, stderr, first.provenance)


def chsh(sc: EPRBScenario, backend: Backend | str | None = None) -> CHSHResult:
    """S = |E(a,b) - E(a,b') + E(a',b) + E(a',b')|."""
    joints = {p: joint_distribution(sc, *p, backend=backend) for p in SETTING_PAIRS}
    return _chsh_from(joints, sc)


def local_baseline_correlation(alice_dir, bob_dir) -> float:
    cells = LocalBaseline(alice_dir, bob_dir).analytic()
    return sum(s * t * cells[(s, t)] for s, t in OUTCOMES)


def local_chsh(sc: EPRBScenario) -> float:
    """CHSH of the local baseline model at the scenario's four settings."""
    e = {p: local_baseline_correlation(sc.direction(p[0]), sc.direction(p[1])) for p in SETTING_PAIRS}
    return abs(e[("a", "b")] - e[("a", "b'")] + e[("a'", "b")] + e[("a'", "b'")])


def _verdict(deviation: Number, tol: float, slack: float) -> str:
    if deviation <= tol:
        return "yes"
    if deviation <= tol + slack:
        return "width-limited"
    return "no"


def _slack(jd: JointDistribution) -> float:
    """How far a deviation may be explained by Cat width or sampling noise."""
    if jd.stderr is not None:
        return MC_SIGMAS * 2 * max(jd.stderr.values())
    return 2 * float(jd.cat_mass)


def _local_marginals(sc: EPRBScenario, alice: str, bob: str, jd: JointDistribution):
    """(Alice, Bob) marginal bounds in one context, each from its own P ⊗ I.

    Counting uses an expansion adapted to the local projector. The joint
    branch expansion cannot serve both sides: with Cat microstates present,
    a Cat inside both P_s ⊗ I and I ⊗ P_t would lie inside branch (s, t),
    so at most one side's marginal is exact there.
    """
    if jd.stderr is not None:
        al, bo = marginals(jd)
        return {s: (al[s], al[s]) for s in SIGNS}, {t: (bo[t], bo[t]) for t in SIGNS}
    backend = Backend.COUNTING if jd.provenance == "counting" else Backend.BORN
    return marginal_bounds(sc, "alice", alice, backend), marginal_bounds(sc, "bob", bob, backend)


def condition_battery(sc: EPRBScenario, backend: Backend | str | None = None, tol: float = DEFAULT_TOLERANCE) -> ConditionReport:
    """Parameter independence, outcome independence, completeness and measurement independence.

    Each deviation is a maximum over the four setting pairs.
    """
    backend = sc.backend if backend is None else Backend(backend)
    joints = {p: joint_distribution(sc, *p, backend=backend) for p in SETTING_PAIRS}
    slack = max(_slack(jd) for jd in joints.values())
    conditions = []

    # Parameter independence: each side's marginal from an expansion adapted to its own projector.
    local = {(x, y): _local_marginals(sc, x, y, jd) for (x, y), jd in joints.items()}
    pairs = [((x, "b"), (x, "b'"), 0) for x in ALICE_SETTINGS]
    pairs += [(("a", y), ("a'", y), 1) for y in BOB_SETTINGS]
    dev, lhs, rhs = 0, None, None
    for p1, p2, side in pairs:
        m1, m2 = local[p1][side], local[p2][side]
        d = max(max(abs(m1[s][0] - m2[s][0]), abs(m1[s][1] - m2[s][1])) for s in SIGNS)
        if lhs is None or d > dev:
            dev, lhs, rhs = d, {s: list(m1[s]) for s in SIGNS}, {s: list(m2[s]) for s in SIGNS}
    pi_slack = slack
    conditions.append(Condition("ParameterIndependence", _verdict(dev, tol, pi_slack), lhs, rhs, dev, tol))

    # Outcome independence.
    dev, lhs, rhs = 0, None, None
    for jd in joints.values():
        alice, _ = marginals(jd)
        for t in SIGNS:
            cond = conditional(jd, t)
            if cond.undefined:
                continue
            for s in SIGNS:
                d = abs(alice[s] - cond[s])
                if lhs is None or d > dev:
                    dev, lhs, rhs = d, {"p(s)": alice[s], "s": s}, {"p(s|t)": cond[s], "s": s, "t": t}
    conditions.append(Condition("OutcomeIndependence", _verdict(dev, tol, slack), lhs, rhs, dev, tol))

    # Completeness.
    dev, lhs, rhs = 0, None, None
    for jd in joints.values():
        alice, bob = marginals(jd)
        for s, t in OUTCOMES:
            d = abs(jd[(s, t)] - alice[s] * bob[t])
            if lhs is None or d > dev:
                dev, lhs, rhs = d, {"p(s,t)": jd[(s, t)]}, {"p(s)p(t)": alice[s] * bob[t]}
    conditions.append(Condition("Completeness", _verdict(dev, tol, slack), lhs, rhs, dev, tol))

    # Measurement independence.
    if backend is Backend.MONTE_CARLO:
        def factory(x, y):
            return LambdaOne(branch_expansion(sc, x, y))
    else:
        def factory(x, y):
            return SuperpositionEnsemble(sc.state, sc.context(x, y))
    mi = measurement_independence_check(factory, SETTING_PAIRS, seed=sc.seed or 0)
    conditions.append(
        Condition(
            "MeasurementIndependence",
            "yes" if mi.independent else "no",
            mi.settings_compared,
            mi.diagnostic,
            0 if mi.independent else 1,
            0.0,
        )
    )
    return ConditionReport(backend.value, tuple(conditions), _chsh_from(joints, sc))


@dataclass(frozen=True)
class CompletenessReport:
    joint: Mapping[tuple[int, int], Fraction]
    alice: Mapping[int, Fraction]
    bob: Mapping[int, Fraction]
    holds: bool
    deviation: Fraction
    n: int


def product_completeness_demo(phi, chi, P_A: Projector, P_B: Projector, n_a: int, n_b: int) -> CompletenessReport:
    """Count the n_a * n_b product microstates of phi ⊗ chi in each (P_A or not) ⊗ (P_B or not) cell."""
    phi, chi = StateVector(phi), StateVector(chi)
    left = adapted_expand(phi, P_A, n_a)
    right = adapted_expand(chi, P_B, n_b)
    if left.counts.cat or right.counts.cat:
        raise ScenarioError(f"side expansions carry Cat microstates ({left.counts}, {right.counts})")
    grid = product_grid(left.expansion, right.expansion)
    n = grid.n
    side = {1: (P_A, P_B), -1: (P_A.complement(), P_B.complement())}
    joint = {}
    for s, t in OUTCOMES:
        P = TensorProjector(side[s][0], side[1][1] if t == 1 else side[-1][1])
        b = probability_bounds(grid, P)
        if not b.is_precise:
            raise ExpansionError("product grid microstate is not an eigenstate")
        joint[(s, t)] = b.lower
    alice = {1: Fraction(left.counts.in_range, n_a), -1: Fraction(left.counts.in_kernel, n_a)}
    bob = {1: Fraction(right.counts.in_range, n_b), -1: Fraction(right.counts.in_kernel, n_b)}
    dev = max(abs(joint[(s, t)] - alice[s] * bob[t]) for s, t in OUTCOMES)
    return CompletenessReport(joint, alice, bob, dev == 0, dev, n)


def photon_box_scenario(backend: Backend | str = Backend.COUNTING) -> ConditionReport:
    """Photon in box A or box B; +1 means found. All settings are the found/empty measurement."""
    z = planar(0.0)
    backend = Backend(backend)
    sc = EPRBScenario(z, z, z, z, photon_box_state(), ancilla_dims=(1, 1), n=2 if backend is not Backend.BORN else None,
                      backend=backend)
    report = condition_battery(sc)
    jd = joint_distribution(sc, "a", "b")
    alice, _ = marginals(jd)
    extra = {
        "p(found_A)": alice[1],
        "p(found_A|found_B)": conditional(jd, 1)[1],
        "p(found_A|empty_B)": conditional(jd, -1)[1],
    }
    return replace(report, extra=extra)


def born_weights(sc: EPRBScenario) -> dict[tuple[str, str], dict[tuple[int, int], float]]:
    return {p: dict(joint_distribution(sc, *p, backend=Backend.BORN).cells) for p in SETTING_PAIRS}


def suggest_n(sc: EPRBScenario, max_denominator: int = 1 << 16, tol: float = 1e-12) -> int | None:
    """Smallest n with n * w integral for every Born cell, or None if some weight is not rational.

    Weights are recognized as rational when a fraction with denominator
    at most ``max_denominator`` matches them within ``tol``.
    """
    dens = []
    for cells in born_weights(sc).values():
        for w in cells.values():
            f = Fraction(w).limit_denominator(max_denominator)
            if abs(float(f) - w) > tol:
                return None
            dens.append(f.denominator)
    n = reduce(math.lcm, dens, 1)
    return max(n, 2)


def allocation_error(sc: EPRBScenario, n: int, weights=None) -> float:
    """Largest |labeled cell fraction - Born weight| that counting at n would produce.

    Predicted from the grid allocation rule without building expansions.
    Cat microstates that land inside a single branch are ignored, so this is
    an upper estimate for those cases.
    """
    weights = born_weights(sc) if weights is None else weights
    rank_a, rank_b = sc.ancilla_dims
    worst = 0.0
    for cells in weights.values():
        ks = {o: grid_allocation(n * w, rank_a, rank_b) for o, w in cells.items()}
        labeled = sum(ks.values())
        if labeled == 0:
            return math.inf
        worst = max(worst, max(abs(ks[o] / labeled - cells[o]) for o in OUTCOMES))
    return worst


def best_n(sc: EPRBScenario, max_n: int | None = None, step: int = 2) -> int:
    """n minimizing ``allocation_error``; the exact n from ``suggest_n`` when it fits."""
    exact = suggest_n(sc)
    limit = sc.dim if max_n is None else min(max_n, sc.dim)
    if exact is not None and exact <= limit:
        return exact
    weights = born_weights(sc)
    candidates = range(max(2, step), limit + 1, step)
    return min(candidates, key=lambda n: (allocation_error(sc, n, weights), n))


def fit_exponent(thetas: Sequence[float], deviations: Sequence[float]) -> float:
    """Least-squares slope of log|deviation| against log(theta)."""
    x = np.log(np.asarray(thetas, dtype=float))
    y = np.log(np.abs(np.asarray(deviations, dtype=float)))
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)


def correlation_signature(thetas: Sequence[float]) -> dict[str, float]:
    """Exponents of |E(theta) - E(0)| for the singlet (Born) and the local baseline."""
    z = planar(0.0)
    quantum, local = [], []
    sc0 = EPRBScenario(z, z, z, z, ancilla_dims=(1, 1))
    e0_q = correlation(sc0, "a", "b", Backend.BORN)
    e0_l = local_baseline_correlation(z, z)
    for th in thetas:
        sc = sc0.with_(b=planar(th))
        quantum.append(correlation(sc, "a", "b", Backend.BORN) - e0_q)
        local.append(local_baseline_correlation(z, planar(th)) - e0_l)
    return {"quantum": fit_exponent(thetas, quantum), "local": fit_exponent(thetas, local)}


SWEEP_COLUMNS = ("theta_deg", "E_born", "E_counting_lo", "E_counting_hi", "E_mc", "stderr")


def correlation_sweep(sc: EPRBScenario, thetas_deg: Iterable[float]) -> list[dict]:
    """E(a, b) with b rotated by theta from a in the x-z plane.

    Counting columns need ``sc.n``; Monte Carlo columns need trials and seed.
    Missing backends leave empty cells.
    """
    base = math.atan2(sc.a[0], sc.a[2])
    rows = []
    for th in thetas_deg:
        s = sc.with_(b=planar(base + math.radians(th)), backend=Backend.BORN)
        row = {"theta_deg": th, "E_born": correlation(s, "a", "b", Backend.BORN)}
        row.update(E_counting_lo="", E_counting_hi="", E_mc="", stderr="")
        if sc.n is not None:
            lo, hi = correlation_bounds(s.with_(n=sc.n), "a", "b", joint_distribution(s.with_(n=sc.n), "a", "b", Backend.COUNTING))
            row["E_counting_lo"], row["E_counting_hi"] = float(lo), float(hi)
        if sc.n is not None and sc.trials and sc.seed is not None:
            mc = s.with_(n=sc.n, trials=sc.trials, seed=sc.seed, backend=Backend.MONTE_CARLO)
            jd = joint_distribution(mc, "a", "b")
            row["E_mc"] = float(correlation_of(jd))
            row["stderr"] = _correlation_stderr(jd)
        rows.append(row)
    return rows


def sweep_csv(rows: Iterable[Mapping]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()
