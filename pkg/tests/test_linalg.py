import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from microcount.errors import DimensionError, ZeroStateError
from microcount.linalg import (
    ComplementProjector,
    IdentityProjector,
    ProjectorSum,
    StateVector,
    SubspaceProjector,
    TensorProjector,
    Unitary,
    embed_left,
    embed_right,
    extend_orthonormal,
    inner_product,
    permutation_unitary,
    random_unitary,
    schmidt,
    spin_projector,
    tensor,
    unitary_fixing,
)

import oracles

e = StateVector.basis


def unit_vectors():
    return st.tuples(
        st.floats(0.0, math.pi), st.floats(0.0, 2 * math.pi)
    ).map(lambda tp: np.array([math.sin(tp[0]) * math.cos(tp[1]), math.sin(tp[0]) * math.sin(tp[1]), math.cos(tp[0])]))


class TestStateVector:
    def test_inner_product_basis(self):
        assert inner_product(e(2, 0), e(2, 0)) == 1
        assert inner_product(e(2, 0), e(2, 1)) == 0

    def test_inner_product_conjugate_linear_in_first(self):
        x = StateVector([1 + 1j, 0])
        assert inner_product(x, e(2, 0)) == 1 - 1j

    def test_inner_product_dim_mismatch(self):
        with pytest.raises(DimensionError):
            inner_product(e(2, 0), e(3, 0))

    def test_tensor_examples(self):
        assert tensor(e(2, 0), e(2, 0)).isclose(e(4, 0))
        x, y = StateVector([2, 0]), StateVector([0, 3])
        assert tensor(x, y).norm == pytest.approx(6.0)
        lhs = tensor(e(2, 0) + e(2, 1), e(2, 0))
        rhs = tensor(e(2, 0), e(2, 0)) + tensor(e(2, 1), e(2, 0))
        assert lhs.isclose(rhs)

    def test_unnormalized_allowed_and_immutable(self):
        x = StateVector([3, 4])
        assert x.norm == 5
        with pytest.raises(ValueError):
            x.amplitudes[0] = 1
        with pytest.raises(ZeroStateError):
            StateVector([0, 0]).normalized()


class TestProjectors:
    def test_embed_left_rank_and_action(self):
        P = spin_projector([0, 0, 1], 1)
        Q = embed_left(P, 3)
        assert (Q.dim, Q.rank) == (6, 3)
        x, y = StateVector([0.3, 0.7j]), StateVector([1, 2, 3])
        assert np.allclose(Q.apply(tensor(x, y).amplitudes), tensor(P(x), y).amplitudes)
        assert np.allclose(embed_left(IdentityProjector(2), 4).matrix(), np.eye(8))

    def test_embed_right_action(self):
        P = spin_projector([1, 0, 0], -1)
        x, y = StateVector([1, 2, 3j]), StateVector([0.3, 0.7])
        assert np.allclose(embed_right(3, P).apply(tensor(x, y).amplitudes), tensor(x, P(y)).amplitudes)

    def test_spin_projector_examples(self):
        assert np.allclose(spin_projector([0, 0, 1], 1).matrix(), [[1, 0], [0, 0]])
        plus_x = np.array([1, 1]) / math.sqrt(2)
        assert np.allclose(spin_projector([1, 0, 0], 1).matrix(), np.outer(plus_x, plus_x))

    @given(unit_vectors())
    def test_spin_projector_matches_eigh(self, n):
        for s in (1, -1):
            assert np.allclose(spin_projector(n, s).matrix(), oracles.spin_matrix(n, s), atol=1e-12)
        total = spin_projector(n, 1).matrix() + spin_projector(n, -1).matrix()
        assert np.allclose(total, np.eye(2), atol=1e-12)

    def test_spin_projector_rejects_non_unit(self):
        with pytest.raises(ValueError):
            spin_projector([0, 0, 2], 1)
        with pytest.raises(ValueError):
            spin_projector([0, 0, 1], 0)

    @pytest.mark.parametrize("dim,rank", [(5, 2), (8, 1), (6, 6), (7, 0)])
    def test_projector_invariants(self, dim, rank):
        rng = np.random.default_rng(dim * 10 + rank)
        rows = oracles.random_subspace(rng, dim, rank) if rank else np.zeros((0, dim))
        P = SubspaceProjector(rows.T)
        M = P.matrix()
        assert np.allclose(M @ M, M, atol=1e-10)
        assert np.allclose(M, M.conj().T, atol=1e-12)
        if rank:
            assert np.allclose(M, oracles.dense_projector(rows), atol=1e-12)
        C = P.complement()
        assert C.rank == dim - rank
        assert np.allclose(C.matrix() + M, np.eye(dim), atol=1e-10)

    def test_non_orthonormal_basis_rejected(self):
        with pytest.raises(ValueError):
            SubspaceProjector(np.array([[1.0], [1.0]]))

    def test_tensor_and_complement_forms_agree_with_dense(self):
        rng = np.random.default_rng(3)
        A = SubspaceProjector(oracles.random_subspace(rng, 3, 2).T)
        B = SubspaceProjector(oracles.random_subspace(rng, 4, 1).T)
        T = TensorProjector(A, B)
        assert T.rank == 2
        assert np.allclose(T.matrix(), np.kron(A.matrix(), B.matrix()), atol=1e-12)
        assert np.allclose(ComplementProjector(T).matrix(), np.eye(12) - T.matrix(), atol=1e-12)
        assert np.allclose(T.range_basis.conj().T @ T.range_basis, np.eye(2), atol=1e-12)

    def test_projector_sum(self):
        z = [0, 0, 1]
        up, down = spin_projector(z, 1), spin_projector(z, -1)
        S = ProjectorSum([TensorProjector(up, up), TensorProjector(down, down)])
        assert S.rank == 2
        assert np.allclose(S.matrix(), np.diag([1, 0, 0, 1]))

    def test_apply_dim_mismatch(self):
        with pytest.raises(DimensionError):
            spin_projector([0, 0, 1], 1).apply(np.ones(3))


class TestSchmidt:
    def test_product_state(self):
        u, v = StateVector([1, 2j]), StateVector([0.5, 0, 1])
        terms = schmidt(tensor(u, v), 2, 3)
        assert len(terms) == 1
        c, left, right = terms[0]
        assert c == pytest.approx(u.norm * v.norm)
        assert tensor(left * c, right).isclose(tensor(u, v))

    def test_singlet(self):
        terms = schmidt(oracles.SINGLET, 2, 2)
        assert [c for c, *_ in terms] == pytest.approx([1 / math.sqrt(2)] * 2)

    def test_zero_and_mismatch(self):
        assert schmidt(np.zeros(4), 2, 2) == []
        with pytest.raises(DimensionError):
            schmidt(np.ones(5), 2, 2)

    @settings(max_examples=30)
    @given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**32 - 1))
    def test_reconstruction(self, d_a, d_b, seed):
        x = oracles.random_state(np.random.default_rng(seed), d_a * d_b)
        rebuilt = sum(c * np.kron(l.amplitudes, r.amplitudes) for c, l, r in schmidt(x, d_a, d_b))
        assert np.allclose(rebuilt, x, atol=1e-12)


class TestOrthonormalExtension:
    def test_extends_in_candidate_order(self):
        existing = np.array([[1, 1, 0, 0]]) / math.sqrt(2)
        out = extend_orthonormal(existing, np.eye(4), 3)
        full = np.vstack([existing, out])
        assert np.allclose(full @ full.conj().T, np.eye(4), atol=1e-12)
        # e1 survives as (e1 - e2)/sqrt(2); e2 is then dependent and skipped
        assert np.allclose(np.abs(out[0]), np.array([1, 1, 0, 0]) / math.sqrt(2))

    def test_runs_out(self):
        with pytest.raises(DimensionError):
            extend_orthonormal(np.empty((0, 3)), [np.array([1.0, 0, 0])], 2)


class TestUnitaries:
    def test_rejects_non_unitary(self):
        with pytest.raises(ValueError):
            Unitary(np.array([[1, 1], [0, 1]]))

    def test_random_unitary_preserves_norm(self):
        rng = np.random.default_rng(0)
        U = random_unitary(6, rng)
        x = oracles.random_state(rng, 6)
        assert np.linalg.norm(U.apply(x)) == pytest.approx(np.linalg.norm(x), rel=1e-9)

    def test_unitary_fixing(self):
        rng = np.random.default_rng(1)
        v = oracles.random_state(rng, 5)
        U = unitary_fixing(v, rng)
        assert np.allclose(U.apply(v), v, atol=1e-10)

    def test_permutation_unitary(self):
        rows = np.eye(4)[:3] * 2.0
        U = permutation_unitary(rows, [1, 2, 0])
        assert np.allclose(U.apply(rows), rows[[1, 2, 0]])
        assert np.allclose(U.apply(np.eye(4)[3]), np.eye(4)[3])

    def test_commutes_with(self):
        P = embed_left(spin_projector([0, 0, 1], 1), 2)
        local = Unitary(np.kron(np.eye(2), np.array([[0, 1], [1, 0]])))
        assert local.commutes_with(P)
        assert not Unitary(np.kron(np.array([[0, 1], [1, 0]]), np.eye(2))).commutes_with(P)
