import numpy as np
import pytest

from conftest import random_density, random_hermitian
from gibbsmerge.operators import (
    DensityMatrix,
    HermitianOperator,
    embed_local,
    matrix_exp_hermitian,
    matrix_exp_unitary,
    operator_norm,
    spectral_decompose,
    tensor_product,
    trace_distance,
    trace_norm,
)


class TestSpectralDecompose:
    def test_identity_fully_degenerate(self):
        pairs = spectral_decompose(np.eye(4))
        assert len(pairs) == 1
        ev, proj = pairs[0]
        assert ev == pytest.approx(1.0)
        np.testing.assert_allclose(proj, np.eye(4), atol=1e-12)

    def test_diagonal_two_groups(self):
        pairs = spectral_decompose(np.diag([0.0, 0.0, 1.0]), degeneracy_tol=1e-8)
        assert len(pairs) == 2
        np.testing.assert_allclose(pairs[0][1], np.diag([1.0, 1.0, 0.0]), atol=1e-12)
        np.testing.assert_allclose(pairs[1][1], np.diag([0.0, 0.0, 1.0]), atol=1e-12)
        assert pairs[0][0] == pytest.approx(0.0, abs=1e-12)
        assert pairs[1][0] == pytest.approx(1.0)

    def test_random_reconstruction(self, rng):
        mat = random_hermitian(rng, 8)
        op = HermitianOperator(mat)
        recon = sum(ev * p for ev, p in zip(op.eigenvalues, op.projectors))
        assert operator_norm(mat - recon) < 1e-10

    def test_projector_completeness_and_orthogonality(self, rng):
        op = HermitianOperator(random_hermitian(rng, 12))
        projs = op.projectors
        assert operator_norm(sum(projs) - np.eye(12)) < 1e-10
        for i, pi in enumerate(projs):
            for j, pj in enumerate(projs):
                expected = pi if i == j else np.zeros((12, 12))
                assert operator_norm(pi @ pj - expected) < 1e-10

    def test_near_degenerate_pair_is_merged(self):
        op = HermitianOperator(np.diag([0.0, 5e-9, 1.0]))  # default tol 1e-8 * range
        assert len(op.eigenvalues) == 2

    def test_non_hermitian_rejected(self):
        with pytest.raises(ValueError, match="not Hermitian"):
            HermitianOperator(np.array([[0.0, 1.0], [0.0, 0.0]]))

    def test_non_square_rejected(self):
        with pytest.raises(ValueError, match="square"):
            HermitianOperator(np.zeros((2, 3)))


class TestMatrixExp:
    def test_zero_operator(self):
        out = matrix_exp_hermitian(np.zeros((3, 3)), -2.5)
        np.testing.assert_allclose(out.matrix, np.eye(3), atol=1e-14)

    def test_diagonal_analytic(self):
        out = matrix_exp_hermitian(np.diag([0.0, 1.0]), -1.0)
        np.testing.assert_allclose(out.matrix, np.diag([1.0, np.exp(-1.0)]), atol=1e-14)

    def test_taylor_series_oracle(self, rng):
        mat = random_hermitian(rng, 4)
        out = matrix_exp_hermitian(mat, -0.7).matrix
        term = np.eye(4, dtype=complex)
        series = np.eye(4, dtype=complex)
        for n in range(1, 31):
            term = term @ (-0.7 * mat) / n
            series = series + term
        assert operator_norm(out - series) < 1e-9

    def test_overflow_range_error(self):
        with pytest.raises(ValueError, match="safe range"):
            matrix_exp_hermitian(np.diag([1000.0, 0.0]), 1.0)

    def test_semigroup_property(self, rng):
        op = HermitianOperator(random_hermitian(rng, 6))
        lhs = matrix_exp_hermitian(op, 0.3).matrix @ matrix_exp_hermitian(op, -0.9).matrix
        rhs = matrix_exp_hermitian(op, -0.6).matrix
        assert operator_norm(lhs - rhs) < 1e-9

    def test_unitary_variant(self, rng):
        op = HermitianOperator(random_hermitian(rng, 6))
        u = matrix_exp_unitary(op, 0.8)
        assert operator_norm(u @ u.conj().T - np.eye(6)) < 1e-10
        evals, projs = zip(*spectral_decompose(op))
        direct = sum(np.exp(1j * 0.8 * ev) * p for ev, p in zip(evals, projs))
        assert operator_norm(u - direct) < 1e-10


class TestTraceNorm:
    def test_zero_matrix(self):
        assert trace_norm(np.zeros((4, 4))) == 0.0

    def test_orthogonal_pure_states(self):
        rho = np.diag([1.0, 0.0])
        sigma = np.diag([0.0, 1.0])
        assert trace_norm(rho - sigma) == pytest.approx(2.0)
        assert trace_distance(rho, sigma) == pytest.approx(1.0)

    def test_eigenvalue_oracle_on_hermitian_difference(self, rng):
        diff = random_density(rng, 8) - random_density(rng, 8)
        oracle = np.abs(np.linalg.eigvalsh(diff)).sum()
        assert trace_norm(diff) == pytest.approx(oracle, abs=1e-10)

    def test_nonfinite_rejected(self):
        bad = np.array([[np.inf, 0.0], [0.0, 0.0]])
        with pytest.raises(ValueError):
            trace_norm(bad)

    def test_triangle_inequality(self, rng):
        for _ in range(10):
            a, b, c = (random_density(rng, 6) for _ in range(3))
            assert trace_distance(a, c) <= trace_distance(a, b) + trace_distance(b, c) + 1e-10


class TestTensorAndEmbed:
    def test_embed_identity_is_global_identity(self):
        out = embed_local(np.eye(2), (1, 1), [2, 2, 2])
        np.testing.assert_allclose(out.matrix, np.eye(8), atol=1e-14)

    def test_embed_z_on_first_qubit(self):
        z = np.diag([1.0, -1.0])
        out = embed_local(z, (0, 0), [2, 2])
        np.testing.assert_allclose(out.matrix, np.diag([1.0, 1.0, -1.0, -1.0]), atol=1e-14)

    def test_embedded_spectrum_has_identity_multiplicity(self, rng):
        term = random_hermitian(rng, 4)
        out = embed_local(term, (1, 2), [2, 2, 2, 2])
        local = np.linalg.eigvalsh(term)
        full = np.linalg.eigvalsh(out.matrix)
        np.testing.assert_allclose(np.sort(np.repeat(local, 4)), full, atol=1e-10)
        assert operator_norm(out) == pytest.approx(np.abs(local).max(), abs=1e-10)

    def test_embed_out_of_bounds(self):
        with pytest.raises(ValueError, match="out of bounds"):
            embed_local(np.eye(2), (3, 3), [2, 2])

    def test_embed_dimension_mismatch(self):
        with pytest.raises(ValueError, match="does not match"):
            embed_local(np.eye(2), (0, 1), [2, 2])

    def test_tensor_product_types(self, rng):
        a = HermitianOperator(random_hermitian(rng, 2))
        b = HermitianOperator(random_hermitian(rng, 3))
        out = tensor_product(a, b)
        assert isinstance(out, HermitianOperator)
        np.testing.assert_allclose(out.matrix, np.kron(a.matrix, b.matrix), atol=1e-14)


class TestDensityMatrix:
    def test_valid_state(self, rng):
        dm = DensityMatrix(random_density(rng, 4))
        assert dm.dim == 4
        assert np.trace(dm.matrix).real == pytest.approx(1.0, abs=1e-10)

    def test_trace_validation(self):
        with pytest.raises(ValueError, match="trace"):
            DensityMatrix(np.eye(2))

    def test_positivity_validation(self):
        with pytest.raises(ValueError, match="negative eigenvalue"):
            DensityMatrix(np.diag([1.5, -0.5]))

    def test_hermiticity_validation(self):
        mat = np.array([[0.5, 0.3], [0.0, 0.5]])
        with pytest.raises(ValueError, match="Hermitian"):
            DensityMatrix(mat)

    def test_from_unnormalized(self):
        dm = DensityMatrix.from_unnormalized(np.diag([2.0, 2.0]))
        np.testing.assert_allclose(dm.matrix, np.eye(2) / 2, atol=1e-14)

    def test_immutability(self, rng):
        dm = DensityMatrix(random_density(rng, 3))
        with pytest.raises(ValueError):
            dm.matrix[0, 0] = 1.0
