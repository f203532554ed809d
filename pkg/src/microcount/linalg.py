"""Finite-dimensional complex linear algebra.

State vectors are immutable wrappers over complex128 arrays. Projectors are
kept as orthonormal range bases (or tensor products / complements of such),
never as dense matrices unless a test asks for one via ``matrix()``.

Batched operations act on the *last* axis, so a stack of vectors is an
``(n, dim)`` array whose rows are the vectors.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Iterator, Sequence

import numpy as np
import scipy.linalg
from scipy.stats import unitary_group

from .errors import DimensionError, ZeroStateError

DEFAULT_TOL = 1e-9
ORTHONORMAL_TOL = 1e-12
_MAX_DENSE_COMPLEMENT = 4096


def _as_array(x) -> np.ndarray:
    if isinstance(x, StateVector):
        return x.amplitudes
    return np.asarray(x, dtype=np.complex128)


class StateVector:
    """Unnormalized vector of complex amplitudes."""

    __slots__ = ("_amps",)

    def __init__(self, amplitudes):
        amps = np.array(_as_array(amplitudes), dtype=np.complex128)
        if amps.ndim != 1 or amps.size == 0:
            raise DimensionError(f"state vector must be 1-D and nonempty, got shape {amps.shape}")
        if not np.all(np.isfinite(amps)):
            raise ValueError("amplitudes must be finite")
        amps.flags.writeable = False
        self._amps = amps

    @classmethod
    def basis(cls, dim: int, index: int) -> StateVector:
        amps = np.zeros(dim, dtype=np.complex128)
        amps[index] = 1.0
        return cls(amps)

    @property
    def amplitudes(self) -> np.ndarray:
        return self._amps

    @property
    def dim(self) -> int:
        return self._amps.size

    @property
    def norm_sq(self) -> float:
        return float(np.vdot(self._amps, self._amps).real)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self._amps))

    def normalized(self) -> StateVector:
        nrm = self.norm
        if nrm == 0.0:
            raise ZeroStateError("cannot normalize the zero vector")
        return StateVector(self._amps / nrm)

    def isclose(self, other, tol: float = DEFAULT_TOL) -> bool:
        other = _as_array(other)
        scale = max(self.norm, float(np.linalg.norm(other)), 1.0)
        return other.shape == self._amps.shape and np.linalg.norm(self._amps - other) <= tol * scale

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self._amps
        return self._amps.astype(dtype)

    def __len__(self) -> int:
        return self.dim

    def __add__(self, other) -> StateVector:
        return StateVector(self._amps + _as_array(other))

    __radd__ = __add__

    def __sub__(self, other) -> StateVector:
        return StateVector(self._amps - _as_array(other))

    def __neg__(self) -> StateVector:
        return StateVector(-self._amps)

    def __mul__(self, scalar) -> StateVector:
        if not np.isscalar(scalar):
            return NotImplemented
        return StateVector(self._amps * scalar)

    __rmul__ = __mul__

    def __truediv__(self, scalar) -> StateVector:
        return StateVector(self._amps / scalar)

    def __repr__(self) -> str:
        return f"StateVector(dim={self.dim}, norm={self.norm:.6g})"


def inner_product(x, y) -> complex:
    """<x, y>, conjugate-linear in ``x``."""
    x, y = _as_array(x), _as_array(y)
    if x.shape != y.shape:
        raise DimensionError(f"dimension mismatch: {x.shape} vs {y.shape}")
    return complex(np.vdot(x, y))


def tensor(x, y) -> StateVector:
    return StateVector(np.kron(_as_array(x), _as_array(y)))


def extend_orthonormal(
    existing: np.ndarray,
    candidates: Iterable[np.ndarray],
    count: int,
    *,
    reject_tol: float = 1e-6,
    block: int = 256,
) -> np.ndarray:
    """Orthonormal rows orthogonal to ``existing``, Gram-Schmidt'ed from ``candidates`` in order.

    ``existing`` rows must already be orthonormal. Candidates whose residual after
    projection falls below ``reject_tol`` of their own norm are skipped.
    Raises DimensionError if the candidates run out first.
    """
    existing = np.asarray(existing, dtype=np.complex128)
    if existing.ndim == 1:
        existing = existing[None, :]
    k, dim = existing.shape
    out = np.empty((count, dim), dtype=np.complex128)
    if count == 0:
        return out
    found = 0
    it = iter(candidates)
    while found < count:
        chunk = list(itertools.islice(it, min(block, count - found + 8)))
        if not chunk:
            raise DimensionError(f"only {found} of {count} orthonormal directions available")
        cand = np.array(chunk, dtype=np.complex128).reshape(len(chunk), dim)
        cand_norms = np.linalg.norm(cand, axis=1)
        for _ in range(2):
            if k:
                cand -= (cand @ existing.conj().T) @ existing
            if found:
                cand -= (cand @ out[:found].conj().T) @ out[:found]
        start = found
        for row, orig in zip(cand, cand_norms):
            if found == count:
                break
            if orig == 0.0:
                continue
            v = row
            if found > start:
                local = out[start:found]
                for _ in range(2):
                    # conj(local @ conj(v)) gives the overlaps without conjugating the block
                    v = v - (local @ v.conj()).conj() @ local
            nv = np.linalg.norm(v)
            if nv <= reject_tol * orig:
                continue
            out[found] = v / nv
            found += 1
    return out


# ---------------------------------------------------------------------------
# Projectors
# ---------------------------------------------------------------------------


class Projector:
    """Orthogonal projector on C^dim. Subclasses define the storage."""

    dim: int
    rank: int

    def apply(self, x) -> np.ndarray:
        """Project along the last axis of ``x``."""
        raise NotImplementedError

    def range_vectors(self) -> Iterator[np.ndarray]:
        """Vectors spanning the range, in a fixed order (not necessarily orthonormal)."""
        raise NotImplementedError

    @property
    def range_basis(self) -> np.ndarray:
        """Orthonormal range basis as ``(dim, rank)`` columns."""
        rows = extend_orthonormal(np.empty((0, self.dim)), self.range_vectors(), self.rank)
        return rows.T

    def complement(self) -> Projector:
        return ComplementProjector(self)

    def matrix(self) -> np.ndarray:
        return self.apply(np.eye(self.dim, dtype=np.complex128)).T

    def tensor(self, other: Projector) -> TensorProjector:
        return TensorProjector(self, other)

    def __call__(self, x) -> StateVector:
        return StateVector(self.apply(_as_array(x)))

    def _check_dim(self, x: np.ndarray) -> None:
        if x.shape[-1] != self.dim:
            raise DimensionError(f"projector on dim {self.dim} applied to last axis {x.shape[-1]}")


class SubspaceProjector(Projector):
    """Projector stored as an orthonormal basis of its range (columns)."""

    def __init__(self, basis, *, tol: float = ORTHONORMAL_TOL):
        basis = np.array(basis, dtype=np.complex128)
        if basis.ndim != 2:
            raise DimensionError("basis must be a (dim, rank) array")
        gram = basis.conj().T @ basis
        if gram.size and np.max(np.abs(gram - np.eye(basis.shape[1]))) > tol:
            raise ValueError("range basis is not orthonormal")
        basis.flags.writeable = False
        self._basis = basis
        self.dim, self.rank = basis.shape

    @classmethod
    def from_vectors(cls, vectors, *, tol: float = DEFAULT_TOL) -> SubspaceProjector:
        """Projector onto the span of ``vectors`` (rows), orthonormalized in order."""
        rows = np.atleast_2d(np.asarray([_as_array(v) for v in vectors], dtype=np.complex128))
        basis = []
        for v in rows:
            for _ in range(2):
                for q in basis:
                    v = v - np.vdot(q, v) * q
            nv = np.linalg.norm(v)
            if nv > tol:
                basis.append(v / nv)
        if not basis:
            return cls(np.zeros((rows.shape[1], 0)))
        return cls(np.array(basis).T)

    @classmethod
    def ray(cls, vector) -> SubspaceProjector:
        v = _as_array(vector)
        nv = np.linalg.norm(v)
        if nv == 0.0:
            raise ZeroStateError("ray of the zero vector")
        return cls((v / nv)[:, None])

    @property
    def range_basis(self) -> np.ndarray:
        return self._basis

    def apply(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.complex128)
        self._check_dim(x)
        return (x @ self._basis.conj()) @ self._basis.T

    def range_vectors(self) -> Iterator[np.ndarray]:
        for j in range(self.rank):
            yield self._basis[:, j]

    @cached_property
    def _complement(self) -> Projector:
        if self.dim <= _MAX_DENSE_COMPLEMENT:
            if self.rank == 0:
                return IdentityProjector(self.dim)
            return SubspaceProjector(scipy.linalg.null_space(self._basis.conj().T), tol=1e-10)
        return ComplementProjector(self)

    def complement(self) -> Projector:
        return self._complement

    def __repr__(self) -> str:
        return f"SubspaceProjector(dim={self.dim}, rank={self.rank})"


class IdentityProjector(Projector):
    def __init__(self, dim: int):
        if dim < 1:
            raise DimensionError("dim must be positive")
        self.dim = self.rank = dim

    @property
    def range_basis(self) -> np.ndarray:
        return np.eye(self.dim, dtype=np.complex128)

    def apply(self, x) -> np.ndarray:
        x = np.array(x, dtype=np.complex128)
        self._check_dim(x)
        return x

    def range_vectors(self) -> Iterator[np.ndarray]:
        for i in range(self.dim):
            e = np.zeros(self.dim, dtype=np.complex128)
            e[i] = 1.0
            yield e

    def complement(self) -> Projector:
        return SubspaceProjector(np.zeros((self.dim, 0)))

    def __repr__(self) -> str:
        return f"IdentityProjector(dim={self.dim})"


class TensorProjector(Projector):
    """left ⊗ right, applied by reshaping rather than materializing."""

    def __init__(self, left: Projector, right: Projector):
        self.left, self.right = left, right
        self.dim = left.dim * right.dim
        self.rank = left.rank * right.rank

    @property
    def range_basis(self) -> np.ndarray:
        return np.kron(self.left.range_basis, self.right.range_basis)

    def apply(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.complex128)
        self._check_dim(x)
        shape = x.shape
        grid = x.reshape(shape[:-1] + (self.left.dim, self.right.dim))
        if not isinstance(self.right, IdentityProjector):
            grid = self.right.apply(grid)
        if not isinstance(self.left, IdentityProjector):
            grid = np.swapaxes(self.left.apply(np.swapaxes(grid, -1, -2)), -1, -2)
        return np.ascontiguousarray(grid).reshape(shape)

    def range_vectors(self) -> Iterator[np.ndarray]:
        for lv in self.left.range_vectors():
            for rv in self.right.range_vectors():
                yield np.kron(lv, rv)

    def __repr__(self) -> str:
        return f"TensorProjector({self.left!r}, {self.right!r})"


class ComplementProjector(Projector):
    """I - P, with range candidates (I - P) e_i."""

    def __init__(self, inner: Projector):
        self.inner = inner
        self.dim = inner.dim
        self.rank = inner.dim - inner.rank

    def apply(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.complex128)
        return x - self.inner.apply(x)

    def range_vectors(self) -> Iterator[np.ndarray]:
        for i in range(self.dim):
            e = np.zeros(self.dim, dtype=np.complex128)
            e[i] = 1.0
            yield e - self.inner.apply(e)

    def complement(self) -> Projector:
        return self.inner

    def __repr__(self) -> str:
        return f"ComplementProjector({self.inner!r})"


class ProjectorSum(Projector):
    """Sum of mutually orthogonal projectors."""

    def __init__(self, parts: Sequence[Projector]):
        if not parts:
            raise ValueError("need at least one part")
        dims = {p.dim for p in parts}
        if len(dims) != 1:
            raise DimensionError(f"parts have different dims {sorted(dims)}")
        self.parts = tuple(parts)
        self.dim = dims.pop()
        self.rank = sum(p.rank for p in parts)

    def apply(self, x) -> np.ndarray:
        return sum(p.apply(x) for p in self.parts)

    def range_vectors(self) -> Iterator[np.ndarray]:
        for p in self.parts:
            yield from p.range_vectors()


def identity_projector(dim: int) -> IdentityProjector:
    return IdentityProjector(dim)


def embed_left(P: Projector, d_B: int) -> TensorProjector:
    """P ⊗ I on C^{d_A} ⊗ C^{d_B}."""
    if d_B < 1:
        raise DimensionError("d_B must be >= 1")
    return TensorProjector(P, IdentityProjector(d_B))


def embed_right(d_A: int, P: Projector) -> TensorProjector:
    """I ⊗ P on C^{d_A} ⊗ C^{d_B}."""
    if d_A < 1:
        raise DimensionError("d_A must be >= 1")
    return TensorProjector(IdentityProjector(d_A), P)


def unit_direction(direction) -> np.ndarray:
    d = np.asarray(direction, dtype=float)
    if d.shape != (3,) or abs(np.linalg.norm(d) - 1.0) > ORTHONORMAL_TOL:
        raise ValueError(f"direction must be a unit 3-vector, got {direction!r}")
    return d


def spin_projector(direction, s: int) -> SubspaceProjector:
    """Projector onto spin ``s`` (+1 or -1) along ``direction``, i.e. (I + s a.sigma)/2."""
    if s not in (1, -1):
        raise ValueError("s must be +1 or -1")
    x, y, z = s * unit_direction(direction)
    # eigenvector of n.sigma with eigenvalue +1 for n = s*a
    if z > -0.5:
        v = np.array([1.0 + z, x + 1j * y])
    else:
        v = np.array([x - 1j * y, 1.0 - z])
    return SubspaceProjector((v / np.linalg.norm(v))[:, None])


def schmidt(x, d_A: int, d_B: int, tol: float = 1e-12) -> list[tuple[float, StateVector, StateVector]]:
    """Schmidt terms (coefficient, left, right) of ``x`` on C^{d_A} ⊗ C^{d_B}, largest first.

    Terms with coefficient below ``tol * ||x||`` are dropped.
    """
    amps = _as_array(x)
    if amps.size != d_A * d_B:
        raise DimensionError(f"dim {amps.size} != {d_A} * {d_B}")
    nrm = np.linalg.norm(amps)
    if nrm == 0.0:
        return []
    u, sv, vh = np.linalg.svd(amps.reshape(d_A, d_B), full_matrices=False)
    return [
        (float(c), StateVector(u[:, i]), StateVector(vh[i, :]))
        for i, c in enumerate(sv)
        if c > tol * nrm
    ]


# ---------------------------------------------------------------------------
# Unitaries
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Unitary:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.complex128)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionError("unitary must be square")
        if np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0]))) > 1e-10:
            raise ValueError("matrix columns are not orthonormal")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def apply(self, x) -> np.ndarray:
        """U acting on the last axis (rows of a stack are vectors)."""
        return np.asarray(x, dtype=np.complex128) @ self.matrix.T

    def __call__(self, x) -> StateVector:
        return StateVector(self.apply(_as_array(x)))

    def commutes_with(self, P: Projector, tol: float = 1e-9) -> bool:
        pm = P.matrix()
        return bool(np.max(np.abs(self.matrix @ pm - pm @ self.matrix)) <= tol)


def random_unitary(dim: int, rng: np.random.Generator) -> Unitary:
    if dim == 1:
        return Unitary(np.exp(2j * np.pi * rng.random()) * np.eye(1))
    return Unitary(unitary_group.rvs(dim, random_state=rng))


def unitary_fixing(vector, rng: np.random.Generator) -> Unitary:
    """Random block unitary that leaves ``vector`` unchanged: 1 on its ray, Haar on the complement."""
    v = _as_array(vector)
    u = v / np.linalg.norm(v)
    comp = scipy.linalg.null_space(u.conj()[None, :])
    block = random_unitary(comp.shape[1], rng).matrix
    return Unitary(np.outer(u, u.conj()) + comp @ block @ comp.conj().T)


def permutation_unitary(rows: np.ndarray, perm: Sequence[int]) -> Unitary:
    """Unitary sending row j of ``rows`` to row perm[j], identity on their orthogonal complement.

    ``rows`` must be pairwise orthogonal with a common norm.
    """
    rows = np.asarray(rows, dtype=np.complex128)
    hat = rows / np.linalg.norm(rows, axis=1, keepdims=True)
    dim = rows.shape[1]
    m = np.eye(dim, dtype=np.complex128) - hat.T @ hat.conj()
    m += hat[list(perm)].T @ hat.conj()
    return Unitary(m)
