import numpy as np
import pytest

from conftest import random_hermitian
from gibbsmerge.chains import (
    ChainModel,
    PAULI_X,
    PAULI_Z,
    build_block_hamiltonian,
    heisenberg,
    link_term,
    random_chain,
    shift_psd,
    transverse_field_ising,
)
from gibbsmerge.gibbs import gibbs_state
from gibbsmerge.operators import (
    HermitianOperator,
    embed_local,
    operator_norm,
    trace_distance,
)


class TestBlockHamiltonian:
    def test_single_site_zero_term(self):
        model = heisenberg(4)  # site terms are zero
        block = build_block_hamiltonian(model, 2, 2)
        assert operator_norm(block) == 0.0

    def test_two_qubit_ising_spectrum(self):
        model = transverse_field_ising(2, coupling=1.0, field=1.0)
        block = build_block_hamiltonian(model, 0, 1)
        explicit = (
            -np.kron(PAULI_Z, PAULI_Z)
            - (np.kron(PAULI_X, np.eye(2)) + np.kron(np.eye(2), PAULI_X))
        )
        np.testing.assert_allclose(block.matrix, explicit, atol=1e-12)
        np.testing.assert_allclose(
            np.linalg.eigvalsh(block.matrix), np.linalg.eigvalsh(explicit), atol=1e-12
        )

    def test_whole_chain_block_equals_term_sum(self):
        model = random_chain(4, seed=3)
        block = build_block_hamiltonian(model, 0, 3)
        dims = [2, 2, 2, 2]
        total = np.zeros((16, 16), dtype=complex)
        for i in range(4):
            total += embed_local(model.site_terms[i], (i, i), dims).matrix
        for i in range(3):
            total += embed_local(model.link_terms[i], (i, i + 1), dims).matrix
        assert operator_norm(block.matrix - total) < 1e-12

    def test_block_excludes_boundary_links(self):
        model = transverse_field_ising(4)
        left = build_block_hamiltonian(model, 0, 1)
        right = build_block_hamiltonian(model, 2, 3)
        full = build_block_hamiltonian(model, 0, 3)
        joined = np.kron(left.matrix, np.eye(4)) + np.kron(np.eye(4), right.matrix)
        boundary = link_term(model, 1, 0, 3)
        assert operator_norm(full.matrix - joined - boundary.matrix) < 1e-12

    def test_invalid_range(self):
        model = transverse_field_ising(4)
        with pytest.raises(ValueError):
            build_block_hamiltonian(model, 2, 5)
        with pytest.raises(ValueError):
            build_block_hamiltonian(model, 3, 1)


class TestLinkTerm:
    def test_zero_link_is_zero_operator(self):
        model = transverse_field_ising(4, coupling=0.0)
        assert operator_norm(link_term(model, 1, 0, 3)) == 0.0

    def test_ising_link_between_two_site_blocks(self):
        model = transverse_field_ising(4, coupling=1.0)
        embedded = link_term(model, 1, 0, 3)
        assert embedded.dim == 16
        assert operator_norm(embedded) == pytest.approx(1.0, abs=1e-12)

    def test_identity_embedding_of_link(self):
        # embedding preserves the local matrix on the right tensor slot
        model = transverse_field_ising(4)
        emb = link_term(model, 0, 0, 1)
        np.testing.assert_allclose(emb.matrix, model.link_terms[0], atol=1e-12)

    def test_invalid_boundary(self):
        model = transverse_field_ising(4)
        with pytest.raises(ValueError):
            link_term(model, 3, 0, 3)  # no link after the last site
        with pytest.raises(ValueError):
            link_term(model, 0, 1, 3)  # link not interior to the block


class TestShiftPsd:
    def test_already_psd_unchanged(self):
        h = HermitianOperator(np.diag([0.0, 1.0, 3.0]))
        shifted, shift = shift_psd(h)
        assert shift == 0.0
        np.testing.assert_allclose(shifted.matrix, h.matrix, atol=1e-14)

    def test_pauli_z_analytic(self):
        shifted, shift = shift_psd(PAULI_Z)
        assert shift == pytest.approx(-1.0)
        np.testing.assert_allclose(shifted.matrix, np.diag([2.0, 0.0]), atol=1e-12)

    def test_random_term_touches_zero(self, rng):
        shifted, _ = shift_psd(random_hermitian(rng, 4))
        assert abs(np.linalg.eigvalsh(shifted.matrix)[0]) < 1e-10

    def test_gibbs_state_shift_invariance(self, rng):
        h = HermitianOperator(random_hermitian(rng, 6))
        shifted = HermitianOperator(h.matrix + 3.7 * np.eye(6), validate=False)
        d = trace_distance(gibbs_state(h, 1.2), gibbs_state(shifted, 1.2))
        assert d < 1e-10


class TestChainModel:
    def test_link_norm_bound_covers_every_link(self):
        model = random_chain(4, seed=9, link_scale=1.5)
        bound = model.link_norm_bound
        assert bound > 0
        for t in model.link_terms:
            shifted, _ = shift_psd(t)
            assert operator_norm(shifted) <= bound + 1e-12

    def test_zero_links_mean_zero_bound(self):
        model = transverse_field_ising(4, coupling=0.0)
        assert model.link_norm_bound == 0.0

    def test_validation(self):
        with pytest.raises(ValueError, match="local_dim"):
            ChainModel("bad", 2, 1, (np.zeros((1, 1)),) * 2, (np.zeros((1, 1)),))
        with pytest.raises(ValueError, match="one site term"):
            ChainModel("bad", 2, 2, (np.zeros((2, 2)),), (np.zeros((4, 4)),))
        with pytest.raises(ValueError, match="not Hermitian"):
            ChainModel(
                "bad",
                2,
                2,
                (np.array([[0.0, 1.0], [0.0, 0.0]]), np.zeros((2, 2))),
                (np.zeros((4, 4)),),
            )

    def test_builtin_models_shapes(self):
        for model in (transverse_field_ising(4), heisenberg(4), random_chain(4, seed=1)):
            assert model.n_sites == 4
            assert len(model.site_terms) == 4
            assert len(model.link_terms) == 3
            assert model.hilbert_dim == 16
