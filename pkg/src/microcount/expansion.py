"""Equiamplitude expansions of a state.

An expansion of psi is a family of n pairwise-orthogonal vectors of equal norm
a = ||psi|| / sqrt(n) that sum to psi. All constructions here use the same
device: pick an orthonormal frame f_0..f_{k-1} whose first vector points along
the part of psi being split, then mix with the k-point discrete Fourier
matrix. Unitarity of the mixing gives orthogonality and equal norms; the
all-ones first row gives the sum.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Hashable, Iterable, Mapping

import numpy as np

from .errors import DimensionError, ExpansionError, RankError, SchmidtRankError, ZeroStateError
from .linalg import (
    IdentityProjector,
    Projector,
    StateVector,
    TensorProjector,
    _as_array,
    extend_orthonormal,
    schmidt,
)

CLASSIFY_EPS = 1e-9
# |x - round(x)| below this counts as an integer microstate count
SNAP_TOL = 1e-9

OVERLAP_TOL = 1e-10
NORM_TOL = 1e-10
RECONSTRUCTION_TOL = 1e-8


class Classification(enum.Enum):
    IN_RANGE = "in-range"
    IN_KERNEL = "in-kernel"
    CAT = "cat"


def classify(xi, P: Projector, eps: float = CLASSIFY_EPS) -> Classification:
    """InRange iff ||P xi - xi|| <= eps ||xi||; InKernel iff ||P xi|| <= eps ||xi||; else Cat."""
    v = _as_array(xi)
    nv = np.linalg.norm(v)
    if nv == 0.0:
        raise ZeroStateError("cannot classify the zero vector")
    pv = P.apply(v)
    if np.linalg.norm(pv - v) <= eps * nv:
        return Classification.IN_RANGE
    if np.linalg.norm(pv) <= eps * nv:
        return Classification.IN_KERNEL
    return Classification.CAT


def classify_rows(rows: np.ndarray, P: Projector, eps: float = CLASSIFY_EPS) -> list[Classification]:
    """Batched ``classify`` over the rows of ``rows``."""
    rows = np.asarray(rows, dtype=np.complex128)
    if rows.shape[0] == 0:
        return []
    norms = np.linalg.norm(rows, axis=1)
    if np.any(norms == 0.0):
        raise ZeroStateError("cannot classify the zero vector")
    proj = P.apply(rows)
    in_range = np.linalg.norm(proj - rows, axis=1) <= eps * norms
    in_kernel = np.linalg.norm(proj, axis=1) <= eps * norms
    out = []
    for r, k in zip(in_range, in_kernel):
        if r:
            out.append(Classification.IN_RANGE)
        elif k:
            out.append(Classification.IN_KERNEL)
        else:
            out.append(Classification.CAT)
    return out


@dataclass(frozen=True, eq=False)
class Microstate:
    vector: StateVector
    classification: Classification | None = None
    branch_label: tuple[int, int] | None = None
    product_parts: tuple[StateVector, StateVector] | None = None


@dataclass(frozen=True)
class VerificationReport:
    max_overlap: float
    max_norm_deviation: float
    reconstruction_error: float
    tallies: dict[str, dict[str, int]]
    passed: bool
    failures: tuple[str, ...] = ()


@dataclass(frozen=True, eq=False)
class Expansion:
    """psi = sum of ``microstates``; see ``verify_expansion`` for the checks."""

    parent: StateVector
    microstates: tuple[Microstate, ...]

    @property
    def n(self) -> int:
        return len(self.microstates)

    @property
    def amplitude(self) -> float:
        return self.parent.norm / math.sqrt(self.n)

    @cached_property
    def matrix(self) -> np.ndarray:
        """Microstates stacked as rows, shape (n, dim)."""
        m = np.array([ms.vector.amplitudes for ms in self.microstates], dtype=np.complex128)
        m.flags.writeable = False
        return m

    @cached_property
    def report(self) -> VerificationReport:
        return verify_expansion(self)

    def transformed(self, U) -> Expansion:
        """Apply a unitary to the parent and to every microstate."""
        rows = U.apply(self.matrix)
        return Expansion(
            parent=StateVector(U.apply(self.parent.amplitudes)),
            microstates=tuple(
                Microstate(StateVector(r), None, ms.branch_label) for r, ms in zip(rows, self.microstates)
            ),
        )

    def to_json(self) -> dict[str, Any]:
        return {
            "parent": _complex_pairs(self.parent.amplitudes),
            "amplitude": self.amplitude,
            "microstates": [
                {
                    "amplitudes": _complex_pairs(ms.vector.amplitudes),
                    "classification": ms.classification.value if ms.classification else None,
                    "branch_label": list(ms.branch_label) if ms.branch_label else None,
                }
                for ms in self.microstates
            ],
        }


def _complex_pairs(arr: np.ndarray) -> list[list[float]]:
    return [[float(z.real), float(z.imag)] for z in arr]


def expansion_from_json(doc: Mapping[str, Any]) -> Expansion:
    def vec(pairs):
        return StateVector([complex(re, im) for re, im in pairs])

    return Expansion(
        parent=vec(doc["parent"]),
        microstates=tuple(
            Microstate(
                vec(m["amplitudes"]),
                Classification(m["classification"]) if m.get("classification") else None,
                tuple(m["branch_label"]) if m.get("branch_label") else None,
            )
            for m in doc["microstates"]
        ),
    )


@dataclass(frozen=True)
class Counts:
    in_range: int
    in_kernel: int
    cat: int

    @property
    def n(self) -> int:
        return self.in_range + self.in_kernel + self.cat


@dataclass(frozen=True, eq=False)
class AdaptedExpansion:
    """Expansion adapted to a single projector: at most one Cat microstate."""

    expansion: Expansion
    target: Projector
    counts: Counts

    @property
    def n(self) -> int:
        return self.expansion.n


Label = Hashable


@dataclass(frozen=True, eq=False)
class BranchExpansion:
    """Product-form expansion adapted to a family of branch projectors left ⊗ right.

    ``counts`` holds the number of labeled (eigenvalue-1) microstates per branch;
    ``cat_count`` those in no branch. ``context`` records what the family was built for.
    """

    expansion: Expansion
    branches: Mapping[Label, tuple[Projector, Projector]]
    counts: Mapping[Label, int]
    cat_count: int
    dims: tuple[int, int]
    context: Any = None

    @property
    def n(self) -> int:
        return self.expansion.n

    def branch_projector(self, label: Label) -> TensorProjector:
        left, right = self.branches[label]
        return TensorProjector(left, right)

    def labels(self) -> list[Label | None]:
        """Per-microstate branch label (None for Cat)."""
        return [ms.branch_label for ms in self.expansion.microstates]


def verify_expansion(
    e: Expansion,
    tol: float | None = None,
    projectors: Mapping[str, Projector] | None = None,
    eps: float = CLASSIFY_EPS,
) -> VerificationReport:
    """Check the defining conditions of an equiamplitude expansion.

    Overlap is reported relative to a^2, norm deviation relative to a, and
    reconstruction error relative to ||psi||. With ``tol=None`` the three
    thresholds are 1e-10, 1e-10 and 1e-8; otherwise ``tol`` applies to all three.
    """
    n = e.n
    if n == 0:
        return VerificationReport(math.inf, math.inf, math.inf, {}, False, ("empty",))
    rows = e.matrix
    a = e.amplitude
    if a == 0.0:
        return VerificationReport(math.inf, math.inf, math.inf, {}, False, ("zero parent",))
    gram = rows @ rows.conj().T
    norms = np.sqrt(np.abs(np.diag(gram)))
    off = gram - np.diag(np.diag(gram))
    max_overlap = float(np.max(np.abs(off))) / a**2 if n > 1 else 0.0
    max_norm_dev = float(np.max(np.abs(norms - a))) / a
    recon = float(np.linalg.norm(rows.sum(axis=0) - e.parent.amplitudes)) / e.parent.norm

    tallies: dict[str, dict[str, int]] = {}
    for name, P in (projectors or {}).items():
        tally = {c.value: 0 for c in Classification}
        for c in classify_rows(rows, P, eps):
            tally[c.value] += 1
        tallies[name] = tally

    limits = (tol, tol, tol) if tol is not None else (OVERLAP_TOL, NORM_TOL, RECONSTRUCTION_TOL)
    failures = []
    if max_overlap > limits[0]:
        failures.append(f"orthogonality: max |<xi_j, xi_k>|/a^2 = {max_overlap:.3g}")
    if max_norm_dev > limits[1]:
        failures.append(f"equal norms: max | ||xi_j|| - a |/a = {max_norm_dev:.3g}")
    if recon > limits[2]:
        failures.append(f"reconstruction: ||sum xi - psi||/||psi|| = {recon:.3g}")
    return VerificationReport(max_overlap, max_norm_dev, recon, tallies, not failures, tuple(failures))


# ---------------------------------------------------------------------------
# Construction helpers
# ---------------------------------------------------------------------------


def _fourier_mix(frame: np.ndarray, amp: float) -> np.ndarray:
    """Rows xi_j = amp * sum_l w^{jl}/sqrt(k) f_l for the orthonormal frame rows f_l."""
    k = frame.shape[0]
    idx = np.arange(k)
    phases = np.exp(2j * np.pi * (np.outer(idx, idx) % k) / k) / math.sqrt(k)
    return amp * (phases @ frame)


def _snap(x: float) -> tuple[int, bool]:
    """(floor-or-rounded count, whether x is an integer within SNAP_TOL)."""
    r = round(x)
    if abs(x - r) <= SNAP_TOL:
        return int(r), True
    return math.floor(x), False


def _split(
    v: np.ndarray,
    candidates: Iterable[np.ndarray],
    k: int,
    part_sq: float,
    exact: bool,
) -> tuple[np.ndarray, np.ndarray]:
    """Split ``v`` into k orthogonal parts of squared norm ``part_sq`` plus an orthogonal residue.

    ``candidates`` must span a space containing ``v``; the parts and residue stay
    inside it. With ``exact`` the residue is zero and the part norm is ||v||/sqrt(k).
    """
    dim = v.size
    if k == 0:
        return np.empty((0, dim), dtype=np.complex128), v.copy()
    vn = float(np.linalg.norm(v))
    u = v / vn
    if exact:
        frame = np.vstack([u, extend_orthonormal(u, candidates, k - 1)])
        return _fourier_mix(frame, vn / math.sqrt(k)), np.zeros(dim, dtype=np.complex128)
    main_sq = k * part_sq
    if main_sq > vn**2 * (1 + 1e-12):
        raise ExpansionError("requested parts exceed the available norm")
    # v_main = c u + d w and r = v - v_main are orthogonal with ||v_main||^2 = main_sq
    c = main_sq / vn
    d = math.sqrt(max(c * (vn - c), 0.0))
    extra = extend_orthonormal(u, candidates, k)
    w, rest = extra[0], extra[1:]
    v_main = c * u + d * w
    frame = np.vstack([v_main / math.sqrt(main_sq), rest])
    return _fourier_mix(frame, math.sqrt(part_sq)), v - v_main


def _require_verified(e: Expansion) -> Expansion:
    if not e.report.passed:
        raise ExpansionError("constructed expansion failed verification: " + "; ".join(e.report.failures))
    return e


# ---------------------------------------------------------------------------
# Public constructors
# ---------------------------------------------------------------------------


def equiamplitude_expand(psi, n: int, subspace_seed: Iterable | None = None) -> Expansion:
    """Expansion of ``psi`` into n equal-norm orthogonal microstates (no projector involved).

    The n-dimensional subspace containing psi is completed by Gram-Schmidt from
    ``subspace_seed`` vectors, then the standard basis, in that order.
    """
    psi = StateVector(psi)
    if n < 2:
        raise ValueError("n must be at least 2")
    if n > psi.dim:
        raise DimensionError(f"n = {n} exceeds dim = {psi.dim}")
    if psi.norm == 0.0:
        raise ZeroStateError("cannot expand the zero vector")
    seed = [np.asarray(_as_array(s), dtype=np.complex128) for s in (subspace_seed or ())]
    candidates = itertools.chain(seed, IdentityProjector(psi.dim).range_vectors())
    parts, _ = _split(psi.amplitudes, candidates, n, psi.norm_sq / n, exact=True)
    e = Expansion(psi, tuple(Microstate(StateVector(r)) for r in parts))
    return _require_verified(e)


def adapted_expand(psi, P: Projector, n: int, eps: float = CLASSIFY_EPS) -> AdaptedExpansion:
    """Expansion of ``psi`` whose microstates are eigenstates of P, except at most one Cat.

    With p = ||P psi||^2 / ||psi||^2: floor(p n) microstates lie in range(P),
    floor((1-p) n) in its kernel, and the Cat (if any) carries both residues.
    """
    psi = StateVector(psi)
    if n < 2:
        raise ValueError("n must be at least 2")
    if psi.dim != P.dim:
        raise DimensionError(f"state dim {psi.dim} != projector dim {P.dim}")
    if psi.norm == 0.0:
        raise ZeroStateError("cannot expand the zero vector")
    if n > psi.dim:
        raise DimensionError(f"n = {n} exceeds dim = {psi.dim}")
    a_sq = psi.norm_sq / n
    v_in = P.apply(psi.amplitudes)
    v_out = psi.amplitudes - v_in
    x = float(np.vdot(v_in, v_in).real) / psi.norm_sq * n
    m, exact = _snap(x)
    m_out = n - m if exact else math.floor(n - x)
    K = P.complement()

    def side(v, proj, k):
        need = k + (0 if exact or k == 0 else 1)
        if need > proj.rank:
            raise RankError(f"need {need} dimensions in a subspace of rank {proj.rank}")
        return _split(v, proj.range_vectors(), k, a_sq, exact)

    in_parts, r_in = side(v_in, P, m)
    out_parts, r_out = side(v_out, K, m_out)
    rows = [in_parts, out_parts]
    if not exact:
        rows.append((r_in + r_out)[None, :])
    matrix = np.concatenate(rows)
    classes = classify_rows(matrix, P, eps)
    counts = Counts(
        in_range=classes.count(Classification.IN_RANGE),
        in_kernel=classes.count(Classification.IN_KERNEL),
        cat=classes.count(Classification.CAT),
    )
    expected = Counts(m, m_out, 0 if exact else 1)
    if counts != expected:
        raise ExpansionError(f"classification {counts} disagrees with construction {expected}")
    e = Expansion(psi, tuple(Microstate(StateVector(r), c) for r, c in zip(matrix, classes)))
    return AdaptedExpansion(_require_verified(e), P, counts)


def _grid(k: int, exact: bool, rank_a: int, rank_b: int) -> tuple[int, int]:
    """Largest k' <= k with a factorization k_a * k_b = k' that fits the ranks.

    A residue on the left side (any k' short of an exact target) costs one
    extra left dimension. Among factorizations the most balanced is chosen.
    """
    for kk in range(k, 0, -1):
        cap_a = rank_a - (0 if exact and kk == k else 1)
        best = None
        for ka in range(1, math.isqrt(kk) + 1):
            if kk % ka:
                continue
            for fa, fb in ((ka, kk // ka), (kk // ka, ka)):
                if fa <= cap_a and fb <= rank_b:
                    score = abs(fa - fb)
                    if best is None or score < best[0] or (score == best[0] and fa < best[1][0]):
                        best = (score, (fa, fb))
        if best is not None:
            return best[1]
    return 0, 0


def grid_allocation(x: float, rank_a: int, rank_b: int) -> int:
    """Number of product microstates a branch of weight x / n receives (x = n * weight)."""
    k, exact = _snap(x)
    k_a, k_b = _grid(k, exact, rank_a, rank_b)
    return k_a * k_b


def _check_branch_family(branches: Mapping[Label, tuple[Projector, Projector]], d_A: int, d_B: int) -> None:
    items = list(branches.items())
    for label, (left, right) in items:
        if left.dim != d_A or right.dim != d_B:
            raise DimensionError(f"branch {label!r} projectors have dims ({left.dim}, {right.dim})")
    for (l1, (a1, b1)), (l2, (a2, b2)) in itertools.combinations(items, 2):
        ov_a = np.max(np.abs(a1.range_basis.conj().T @ a2.range_basis), initial=0.0)
        ov_b = np.max(np.abs(b1.range_basis.conj().T @ b2.range_basis), initial=0.0)
        if ov_a > 1e-9 and ov_b > 1e-9:
            raise ValueError(f"branches {l1!r} and {l2!r} are not orthogonal")
    if sum(a.rank * b.rank for a, b in branches.values()) != d_A * d_B:
        raise ValueError("branch projectors do not sum to the identity")


def _cat_block(residues: list[np.ndarray], existing: np.ndarray, candidates: Iterable, c: int) -> np.ndarray:
    """Split the summed residues into ``c`` equal-norm vectors orthogonal to ``existing``."""
    total = np.sum(residues, axis=0)
    tn = float(np.linalg.norm(total))
    if tn == 0.0:
        raise ExpansionError("no residual norm left for the remaining microstates")
    f0 = total / tn
    directions = [r / np.linalg.norm(r) for r in residues if np.linalg.norm(r) > 0]
    more = extend_orthonormal(np.vstack([existing, f0[None, :]]), itertools.chain(directions, candidates), c - 1)
    return _fourier_mix(np.vstack([f0, more]), tn / math.sqrt(c))


def product_adapted_expand(
    psi,
    branches: Mapping[Label, tuple[Projector, Projector]],
    d_A: int,
    d_B: int,
    n: int,
    eps: float = CLASSIFY_EPS,
    context: Any = None,
) -> BranchExpansion:
    """Expansion of ``psi`` into product microstates, each an eigenstate of one branch left ⊗ right.

    Branch (s, t) with weight w receives a k_A x k_B grid of products
    u_i ⊗ v_j, where k_A * k_B is the largest rank-compatible factorizable
    count not above n w. The leftover norm of all branches is pooled and split
    into the remaining n - sum k microstates, which are Cat unless they happen
    to fall inside a single branch.
    """
    psi = StateVector(psi)
    if psi.dim != d_A * d_B:
        raise DimensionError(f"state dim {psi.dim} != {d_A} * {d_B}")
    if psi.norm == 0.0:
        raise ZeroStateError("cannot expand the zero vector")
    if n < 2:
        raise ValueError(f"n must be at least 2, got {n}")
    if n > psi.dim:
        raise DimensionError(f"n = {n} exceeds dim = {psi.dim}")
    _check_branch_family(branches, d_A, d_B)

    a_sq = psi.norm_sq / n
    product_rows = []
    product_meta = []
    groups: dict[int, dict] = {}
    for label, (left, right) in branches.items():
        bv = TensorProjector(left, right).apply(psi.amplitudes)
        x = float(np.vdot(bv, bv).real) / a_sq
        group = groups.setdefault(id(left), {"left": left, "x": 0.0, "k": 0, "residues": []})
        group["x"] += x
        k, exact = _snap(x)
        terms = schmidt(bv, d_A, d_B)
        if not terms or (k == 0 and exact):
            continue
        if len(terms) > 1 and terms[1][0] > 1e-9 * terms[0][0]:
            raise SchmidtRankError(
                f"branch {label!r} has Schmidt rank {len(terms)} (coefficients {[t[0] for t in terms]})"
            )
        coeff, u0, v0 = terms[0]
        u = coeff * u0.amplitudes
        v = v0.amplitudes
        k_a, k_b = _grid(k, exact, left.rank, right.rank)
        exact_grid = exact and k_a * k_b == k
        if k_a * k_b == 0:
            group["residues"].append(bv)
            continue
        v_parts, _ = _split(v, right.range_vectors(), k_b, 1.0 / k_b, exact=True)
        u_parts, r_u = _split(u, left.range_vectors(), k_a, a_sq * k_b, exact=exact_grid)
        grid = np.einsum("ia,jb->ijab", u_parts, v_parts).reshape(k_a * k_b, d_A * d_B)
        product_rows.append(grid)
        group["k"] += k_a * k_b
        for i, j in itertools.product(range(k_a), range(k_b)):
            product_meta.append((label, StateVector(u_parts[i]), StateVector(v_parts[j])))
        if not exact_grid:
            group["residues"].append(np.kron(r_u, v))

    products = np.concatenate(product_rows) if product_rows else np.empty((0, psi.dim), np.complex128)
    existing = products / math.sqrt(a_sq)
    rows = [products]
    pooled = []
    # A group of branches sharing one left projector with integral total
    # weight keeps its leftover inside range(left) ⊗ C^d_B, so the left
    # marginal count stays exact. Other leftovers are pooled globally.
    for group in groups.values():
        k_g, exact_g = _snap(group["x"])
        c_g = k_g - group["k"]
        if not group["residues"]:
            continue
        if not exact_g or c_g <= 0:
            pooled.extend(group["residues"])
            continue
        candidates = TensorProjector(group["left"], IdentityProjector(d_B)).range_vectors()
        block = _cat_block(group["residues"], existing, candidates, c_g)
        rows.append(block)
        existing = np.vstack([existing, block / math.sqrt(a_sq)])
    c = n - sum(r.shape[0] for r in rows)
    if c > 0:
        block = _cat_block(pooled, existing, IdentityProjector(psi.dim).range_vectors(), c)
        rows.append(block)
    elif pooled and np.linalg.norm(np.sum(pooled, axis=0)) > 1e-9 * math.sqrt(a_sq):
        raise ExpansionError("residual norm left over with no microstates to carry it")
    matrix = np.concatenate(rows)
    c = matrix.shape[0] - products.shape[0]

    microstates = [
        Microstate(StateVector(r), Classification.IN_RANGE, label, (ua, vb))
        for r, (label, ua, vb) in zip(products, product_meta)
    ]
    counts = {label: 0 for label in branches}
    for label, *_ in product_meta:
        counts[label] += 1
    cat_count = 0
    if c > 0:
        leftovers = matrix[products.shape[0]:]
        in_branch = {
            label: classify_rows(leftovers, TensorProjector(*pair), eps) for label, pair in branches.items()
        }
        for idx, row in enumerate(leftovers):
            hit = [label for label in branches if in_branch[label][idx] is Classification.IN_RANGE]
            if hit:
                terms = schmidt(row, d_A, d_B)
                parts = None
                if len(terms) == 1:
                    parts = (terms[0][1] * terms[0][0], terms[0][2])
                microstates.append(Microstate(StateVector(row), Classification.IN_RANGE, hit[0], parts))
                counts[hit[0]] += 1
            else:
                microstates.append(Microstate(StateVector(row), Classification.CAT))
                cat_count += 1
    e = Expansion(psi, tuple(microstates))
    return BranchExpansion(_require_verified(e), dict(branches), counts, cat_count, (d_A, d_B), context)


def product_grid(left: Expansion, right: Expansion) -> Expansion:
    """The n_a * n_b microstates xi_j ⊗ eta_k of two expansions, an expansion of their product."""
    parent = StateVector(np.kron(left.parent.amplitudes, right.parent.amplitudes))
    microstates = []
    for ms_l in left.microstates:
        for ms_r in right.microstates:
            vec = StateVector(np.kron(ms_l.vector.amplitudes, ms_r.vector.amplitudes))
            microstates.append(Microstate(vec, None, None, (ms_l.vector, ms_r.vector)))
    return _require_verified(Expansion(parent, tuple(microstates)))
