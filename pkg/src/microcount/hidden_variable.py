"""Deterministic hidden-variable models and their statistics.

Three models share one interface:

* ``LambdaOne``: one microstate of a branch-labeled expansion, drawn
  uniformly. The expansion is built for one setting pair, so the model is
  tied to that context.
* ``LocalBaseline``: lambda uniform on the unit sphere, s = sign(a . lambda),
  t = -sign(b . lambda). Factorizable and setting-independent.
* ``SuperpositionEnsemble``: the whole state as the hidden variable; only
  used to show that its ensemble does not depend on the settings.

Outcomes are encoded as integer codes 0..3 in ``OUTCOMES`` order, with
``CAT_CODE`` for microstates that carry no branch label.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .distributions import OUTCOMES, JointDistribution, Outcome, outcome_key, parse_outcome_key
from .errors import ContextError, InfiniteSupportError, ScenarioError
from .expansion import BranchExpansion, Classification, classify_rows
from .linalg import IdentityProjector, StateVector, TensorProjector, unit_direction

CAT = "cat"
CAT_CODE = len(OUTCOMES)
CODE_OF = {o: i for i, o in enumerate(OUTCOMES)}
DEFAULT_CHUNK = 1 << 20
RETROCAUSAL_DIAGNOSTIC = "ensemble depends on (a,b): retrocausal bookkeeping"


def _code(s: int, t: int) -> int:
    return CODE_OF[(s, t)]


def _same_setting(x, y) -> bool:
    if x is None or y is None:
        return True
    return bool(np.allclose(np.asarray(x, dtype=float), np.asarray(y, dtype=float), atol=1e-12))


class HiddenVariableModel(ABC):
    """lambda sampler plus a deterministic outcome map."""

    name: str
    context: tuple | None

    @abstractmethod
    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw ``size`` hidden variables from the model's distribution."""

    @abstractmethod
    def outcome(self, lam, alice=None, bob=None) -> Outcome | str:
        """(s, t) for one lambda, or ``CAT``. ``None`` settings mean the model's context."""

    @abstractmethod
    def codes(self, lams: np.ndarray) -> np.ndarray:
        """Vectorized outcome codes in the model's own context."""

    def ensemble(self, seed: int = 0, size: int = 64) -> np.ndarray:
        """A setting-comparable view of the lambda ensemble, one row per element."""
        return np.asarray(self.sample(np.random.default_rng(seed), size))

    def sample_codes(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.codes(self.sample(rng, size))


class LambdaOne(HiddenVariableModel):
    """Uniform draw of one microstate from a branch-labeled expansion."""

    def __init__(self, be: BranchExpansion, name: str = "lambda-one"):
        if not isinstance(be, BranchExpansion):
            raise TypeError("lambda-one needs a branch-labeled expansion")
        labels = be.labels()
        if any(lab is not None and lab not in CODE_OF for lab in labels):
            raise ValueError("branch labels must be (s, t) pairs with s, t in {+1, -1}")
        if all(lab is None for lab in labels):
            raise ValueError("expansion carries no branch labels")
        self.name = name
        self.branch_expansion = be
        self.context = be.context
        self._codes = np.array([CAT_CODE if lab is None else CODE_OF[lab] for lab in labels], dtype=np.int64)
        self._codes.flags.writeable = False

    @property
    def n(self) -> int:
        return len(self._codes)

    @property
    def support_codes(self) -> np.ndarray:
        return self._codes

    def sample(self, rng, size):
        return rng.integers(0, self.n, size=size)

    def _check_context(self, alice, bob) -> None:
        ctx = self.context or (None, None)
        if not (_same_setting(alice, ctx[0]) and _same_setting(bob, ctx[1])):
            raise ContextError(
                f"microstate built for context {ctx!r} has no counterpart at settings ({alice!r}, {bob!r})"
            )

    def outcome(self, lam, alice=None, bob=None):
        self._check_context(alice, bob)
        code = int(self._codes[int(lam)])
        return CAT if code == CAT_CODE else OUTCOMES[code]

    def codes(self, lams):
        return self._codes[np.asarray(lams)]

    def ensemble(self, seed: int = 0, size: int = 64) -> np.ndarray:
        return self.branch_expansion.expansion.matrix


class LocalBaseline(HiddenVariableModel):
    """lambda uniform on S^2; s = sign(a . lambda), t = -sign(b . lambda), with sign(0) = +1."""

    def __init__(self, a, b, name: str = "local-baseline"):
        self.name = name
        self.a = unit_direction(a)
        self.b = unit_direction(b)
        self.context = (tuple(self.a), tuple(self.b))

    def sample(self, rng, size):
        lam = rng.standard_normal((size, 3))
        return lam / np.linalg.norm(lam, axis=1, keepdims=True)

    @staticmethod
    def _sign(x):
        return np.where(np.asarray(x) >= 0.0, 1, -1)

    def outcome(self, lam, alice=None, bob=None):
        a = self.a if alice is None else unit_direction(alice)
        b = self.b if bob is None else unit_direction(bob)
        lam = np.asarray(lam, dtype=float)
        return int(self._sign(a @ lam)), int(-self._sign(b @ lam))

    def codes(self, lams):
        lams = np.asarray(lams, dtype=float)
        s = self._sign(lams @ self.a)
        t = -self._sign(lams @ self.b)
        return 2 * (s < 0) + (t < 0)

    def analytic(self) -> dict[Outcome, float]:
        """Cell probabilities from the angle between a and b."""
        theta = math.acos(max(-1.0, min(1.0, float(self.a @ self.b))))
        same = theta / (2 * math.pi)
        diff = (math.pi - theta) / (2 * math.pi)
        return {(1, 1): same, (-1, -1): same, (1, -1): diff, (-1, 1): diff}


class FunctionModel(HiddenVariableModel):
    """A deterministic model from plain callables, for ad hoc constructions."""

    def __init__(
        self,
        name: str,
        sampler: Callable[[np.random.Generator, int], np.ndarray],
        outcome_map: Callable[[object, object, object], Outcome],
        context: tuple,
    ):
        self.name = name
        self._sampler = sampler
        self._outcome_map = outcome_map
        self.context = context

    def sample(self, rng, size):
        return self._sampler(rng, size)

    def outcome(self, lam, alice=None, bob=None):
        ctx = self.context
        return self._outcome_map(lam, ctx[0] if alice is None else alice, ctx[1] if bob is None else bob)

    def codes(self, lams):
        return np.array([_code(*self.outcome(lam)) for lam in lams], dtype=np.int64)


class SuperpositionEnsemble(HiddenVariableModel):
    """The whole state as a single hidden variable; its ensemble is {psi} for every setting."""

    def __init__(self, psi, context=None, name: str = "superposition"):
        self.name = name
        self.psi = StateVector(psi)
        self.context = context

    def sample(self, rng, size):
        return np.zeros(size, dtype=np.int64)

    def outcome(self, lam, alice=None, bob=None):
        return CAT

    def codes(self, lams):
        return np.full(np.shape(lams), CAT_CODE, dtype=np.int64)

    def ensemble(self, seed: int = 0, size: int = 64) -> np.ndarray:
        return self.psi.amplitudes[None, :]


def lambda_one_model(be: BranchExpansion) -> LambdaOne:
    return LambdaOne(be)


def local_baseline(a, b) -> LocalBaseline:
    return LocalBaseline(a, b)


@dataclass(frozen=True)
class EmpiricalJoint:
    counts: Mapping[Outcome, int]
    trials: int
    cat_hits: int
    seed: int

    def __post_init__(self):
        if sum(self.counts.values()) + self.cat_hits != self.trials:
            raise ValueError("counts plus cat hits must equal trials")

    @property
    def labeled(self) -> int:
        return self.trials - self.cat_hits

    def probabilities(self) -> dict[Outcome, float]:
        if self.labeled == 0:
            raise ScenarioError("every trial hit a Cat microstate")
        return {o: self.counts[o] / self.labeled for o in OUTCOMES}

    def stderr(self) -> dict[Outcome, float]:
        p = self.probabilities()
        return {o: math.sqrt(p[o] * (1 - p[o]) / self.labeled) for o in OUTCOMES}

    def joint(self) -> JointDistribution:
        return JointDistribution(
            cells=self.probabilities(),
            provenance="monte-carlo",
            cat_mass=self.cat_hits / self.trials,
            stderr=self.stderr(),
        )

    def merge(self, other: EmpiricalJoint) -> EmpiricalJoint:
        """Counts are additive across independent streams."""
        return EmpiricalJoint(
            {o: self.counts[o] + other.counts[o] for o in OUTCOMES},
            self.trials + other.trials,
            self.cat_hits + other.cat_hits,
            self.seed,
        )

    def to_json(self) -> dict:
        return {
            "counts": {outcome_key(o): int(self.counts[o]) for o in OUTCOMES},
            "trials": self.trials,
            "cat_hits": self.cat_hits,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> EmpiricalJoint:
        counts = {parse_outcome_key(k): int(v) for k, v in doc["counts"].items()}
        return cls(counts, int(doc["trials"]), int(doc["cat_hits"]), int(doc["seed"]))


def stream(seed: int, index: int, key: tuple[int, ...] = ()) -> np.random.Generator:
    """Counter-based generator for stream ``key + (index,)`` of ``seed``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(*key, index))))


def monte_carlo(
    model: HiddenVariableModel,
    trials: int,
    seed: int,
    chunk: int = DEFAULT_CHUNK,
    key: tuple[int, ...] = (),
) -> EmpiricalJoint:
    """Empirical joint over ``trials`` draws.

    Block i of ``chunk`` trials draws from stream i, so blocks can run on
    separate workers and their counts be added.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    tally = np.zeros(CAT_CODE + 1, dtype=np.int64)
    for index, start in enumerate(range(0, trials, chunk)):
        codes = model.sample_codes(stream(seed, index, key), min(chunk, trials - start))
        tally += np.bincount(codes, minlength=CAT_CODE + 1)
    counts = {o: int(tally[i]) for i, o in enumerate(OUTCOMES)}
    return EmpiricalJoint(counts, trials, int(tally[CAT_CODE]), seed)


def exact_average(model: HiddenVariableModel) -> JointDistribution:
    """Exact cell fractions over a finite lambda space.

    Cells are normalized on the labeled support; ``lower``/``upper`` give
    the raw count / n and (count + cats) / n, and ``cat_mass`` the Cat share.
    """
    codes = getattr(model, "support_codes", None)
    if codes is None:
        raise InfiniteSupportError(f"{model.name} has a continuous hidden-variable space")
    n = len(codes)
    tally = np.bincount(codes, minlength=CAT_CODE + 1)
    cats = int(tally[CAT_CODE])
    if cats == n:
        raise ScenarioError("every microstate is a Cat")
    labeled = n - cats
    return JointDistribution(
        cells={o: Fraction(int(tally[i]), labeled) for i, o in enumerate(OUTCOMES)},
        provenance="lambda-one-exact",
        cat_mass=Fraction(cats, n),
        lower={o: Fraction(int(tally[i]), n) for i, o in enumerate(OUTCOMES)},
        upper={o: Fraction(int(tally[i]) + cats, n) for i, o in enumerate(OUTCOMES)},
    )


def _rows_match(x: np.ndarray, y: np.ndarray, tol: float) -> np.ndarray:
    """Boolean (len x, len y) matrix: rows equal within ``tol`` in Euclidean norm."""
    gram = x @ y.conj().T
    nx = np.sum(np.abs(x) ** 2, axis=1)[:, None]
    ny = np.sum(np.abs(y) ** 2, axis=1)[None, :]
    dist_sq = np.maximum(nx + ny - 2 * gram.real, 0.0)
    # the expanded form loses a few ulps of the squared norms to cancellation
    return dist_sq <= tol**2 + 16 * np.finfo(float).eps * (nx + ny)


@dataclass(frozen=True)
class EnsembleReport:
    alice_plus_counts: tuple[int, int]
    counts_equal: bool
    shared_microstates: int
    disjoint: bool
    identical: bool
    n: int


def _alice_plus(be: BranchExpansion):
    lefts = {id(pair[0]): pair[0] for label, pair in be.branches.items() if label[0] == 1}
    if len(lefts) != 1:
        raise ScenarioError("Alice's +1 outcome must correspond to one left projector")
    return TensorProjector(next(iter(lefts.values())), IdentityProjector(be.dims[1]))


def ensemble_correspondence(be1: BranchExpansion, be2: BranchExpansion, tol: float = 1e-9) -> EnsembleReport:
    """Compare the ensembles built for (a, b) and (a, b').

    Alice's s = +1 count is taken by classifying every microstate against
    her projector, so Cat microstates are counted honestly. Two microstates
    are shared when they are equal within ``tol`` times the amplitude.
    """
    e1, e2 = be1.expansion, be2.expansion
    if e1.n != e2.n:
        raise ScenarioError(f"n differs: {e1.n} vs {e2.n}")
    if not e1.parent.isclose(e2.parent):
        raise ScenarioError("expansions are of different states")
    ctx1, ctx2 = be1.context or (None, None), be2.context or (None, None)
    if not _same_setting(ctx1[0], ctx2[0]):
        raise ScenarioError("Alice's setting differs between the two ensembles")
    counts = []
    for be in (be1, be2):
        classes = classify_rows(be.expansion.matrix, _alice_plus(be))
        counts.append(classes.count(Classification.IN_RANGE))
    match = _rows_match(e1.matrix, e2.matrix, tol * e1.amplitude)
    shared = int(np.count_nonzero(match.any(axis=1)))
    return EnsembleReport(
        alice_plus_counts=(counts[0], counts[1]),
        counts_equal=counts[0] == counts[1],
        shared_microstates=shared,
        disjoint=shared == 0,
        identical=shared == e1.n,
        n=e1.n,
    )


@dataclass(frozen=True)
class FactorizabilityReport:
    verdict: str  # "factorizable", "not factorizable" or "context-bound"
    per_lambda: tuple[bool, ...]
    detail: str = ""

    @property
    def factorizable(self) -> bool:
        return self.verdict == "factorizable"


def factorizability_check(
    model: HiddenVariableModel,
    lambdas: Iterable,
    alice_settings: Sequence,
    bob_settings: Sequence,
) -> FactorizabilityReport:
    """Per lambda, does s depend only on Alice's setting and t only on Bob's?"""
    per = []
    for lam in lambdas:
        table = {}
        try:
            for i, a in enumerate(alice_settings):
                for j, b in enumerate(bob_settings):
                    table[i, j] = model.outcome(lam, a, b)
        except ContextError as exc:
            return FactorizabilityReport("context-bound", tuple(per), str(exc))
        labeled = {k: v for k, v in table.items() if v != CAT}
        ok = True
        for (i, j), (s, t) in labeled.items():
            for (i2, j2), (s2, t2) in labeled.items():
                if (i == i2 and s != s2) or (j == j2 and t != t2):
                    ok = False
        per.append(ok)
    verdict = "factorizable" if all(per) else "not factorizable"
    return FactorizabilityReport(verdict, tuple(per))


@dataclass(frozen=True)
class IndependenceReport:
    independent: bool
    settings_compared: int
    diagnostic: str | None


def _same_ensemble(x: np.ndarray, y: np.ndarray, tol: float = 1e-9) -> bool:
    if x.shape != y.shape:
        return False
    scale = max(float(np.max(np.abs(x), initial=0.0)), 1.0)
    match = _rows_match(x.reshape(len(x), -1), y.reshape(len(y), -1), tol * scale)
    return bool(match.any(axis=1).all() and match.any(axis=0).all())


def measurement_independence_check(
    model_factory: Callable[[object, object], HiddenVariableModel],
    settings_grid: Iterable[tuple[object, object]],
    seed: int = 0,
) -> IndependenceReport:
    """Is the lambda ensemble the same for every setting pair?

    Sampled models are compared draw by draw under a shared seed; finite
    models compare their microstate sets.
    """
    ensembles = [model_factory(a, b).ensemble(seed) for a, b in settings_grid]
    independent = all(_same_ensemble(ensembles[0], e) for e in ensembles[1:])
    return IndependenceReport(independent, len(ensembles), None if independent else RETROCAUSAL_DIAGNOSTIC)
