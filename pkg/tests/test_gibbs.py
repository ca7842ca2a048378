import numpy as np
import pytest
from scipy.integrate import quad_vec
from scipy.linalg import expm

from conftest import random_hermitian
from gibbsmerge.chains import transverse_field_ising, build_block_hamiltonian
from gibbsmerge.gibbs import (
    GibbsFamily,
    dyson_imaginary_first_order,
    dyson_real_time_terms,
    first_order_projector_form,
    gibbs_state,
)
from gibbsmerge.operators import (
    DensityMatrix,
    HermitianOperator,
    embed_local,
    operator_norm,
    trace_norm,
)


def quadrature_first_order(h_mat, pert, beta):
    """Independent oracle: -(1/Z) integral_0^beta e^{-(b-s)H} h e^{-sH} ds."""
    z = np.trace(expm(-beta * h_mat)).real

    def integrand(s):
        return expm(-(beta - s) * h_mat) @ pert @ expm(-s * h_mat)

    val, _ = quad_vec(integrand, 0.0, beta, epsabs=1e-12, epsrel=1e-12)
    return -val / z


class TestGibbsState:
    def test_zero_hamiltonian_is_maximally_mixed(self):
        state = gibbs_state(np.zeros((5, 5)), 2.0)
        np.testing.assert_allclose(state.matrix, np.eye(5) / 5, atol=1e-14)

    def test_single_qubit_analytic(self):
        state = gibbs_state(np.diag([1.0, -1.0]), 1.0)
        z = 2 * np.cosh(1.0)
        np.testing.assert_allclose(
            state.matrix, np.diag([np.exp(-1.0), np.exp(1.0)]) / z, atol=1e-12
        )

    def test_three_qubit_ising_vs_scaled_taylor(self):
        model = transverse_field_ising(3)  # power of two not needed for the oracle
        h = build_block_hamiltonian(model, 0, 2).matrix
        beta = 0.5
        # scaling and squaring with an order-30 Taylor kernel, no eigh anywhere
        squarings = 6
        x = -beta * h / 2**squarings
        term = np.eye(8, dtype=complex)
        series = np.eye(8, dtype=complex)
        for n in range(1, 31):
            term = term @ x / n
            series = series + term
        for _ in range(squarings):
            series = series @ series
        oracle = series / np.trace(series).real
        assert trace_norm(gibbs_state(h, beta).matrix - oracle) < 1e-9

    def test_invalid_beta(self):
        with pytest.raises(ValueError, match="beta"):
            gibbs_state(np.zeros((2, 2)), 0.0)

    def test_overflow_handled_by_shift(self):
        # spectrum offset by 1000 would overflow a naive exponentiation
        state = gibbs_state(np.diag([-1000.0, -999.0]), 2.0)
        assert np.trace(state.matrix).real == pytest.approx(1.0, abs=1e-12)


class TestGibbsFamily:
    def test_partition_function_positive(self, rng):
        fam = GibbsFamily(random_hermitian(rng, 6), 1.5)
        assert fam.partition_function > 0

    def test_intermediate_zero_is_identity_over_z(self, rng):
        fam = GibbsFamily(random_hermitian(rng, 4), 1.0)
        np.testing.assert_allclose(
            fam.intermediate(0.0), np.eye(4) / fam.partition_function, atol=1e-12
        )

    def test_intermediate_at_beta_is_state(self, rng):
        fam = GibbsFamily(random_hermitian(rng, 4), 1.0)
        state = fam.state()
        assert np.trace(state.matrix).real == pytest.approx(1.0, abs=1e-10)
        np.testing.assert_allclose(
            state.matrix, gibbs_state(fam.hamiltonian, 1.0).matrix, atol=1e-12
        )

    def test_out_of_range_beta_tilde(self, rng):
        fam = GibbsFamily(random_hermitian(rng, 4), 1.0)
        with pytest.raises(ValueError):
            fam.intermediate(1.5)


class TestImaginaryTimeFirstOrder:
    def test_zero_perturbation(self, rng):
        h = random_hermitian(rng, 4)
        out = dyson_imaginary_first_order(h, np.zeros((4, 4)), 1.0)
        assert trace_norm(out) < 1e-14

    def test_commuting_analytic_case(self):
        # H = diag(0, 1), h = diag(1, 0): only the ground diagonal block
        # contributes, with coefficient -beta * p_0
        z = 1 + np.exp(-1.0)
        out = dyson_imaginary_first_order(np.diag([0.0, 1.0]), np.diag([1.0, 0.0]), 1.0)
        np.testing.assert_allclose(out, np.diag([-1.0 / z, 0.0]), atol=1e-12)

    def test_quadrature_oracle_three_qubits(self, rng):
        model = transverse_field_ising(3)
        h = build_block_hamiltonian(model, 0, 2)
        link = embed_local(random_hermitian(rng, 4), (0, 1), [2, 2, 2]).matrix
        beta = 1.0
        closed = dyson_imaginary_first_order(h, link, beta)
        oracle = quadrature_first_order(h.matrix, link, beta)
        assert trace_norm(closed - oracle) < 1e-8

    def test_dimension_mismatch(self, rng):
        with pytest.raises(ValueError, match="dimension"):
            dyson_imaginary_first_order(random_hermitian(rng, 4), np.zeros((2, 2)), 1.0)

    def test_trace_identity(self, rng):
        h = HermitianOperator(random_hermitian(rng, 6))
        pert = random_hermitian(rng, 6)
        beta = 1.3
        d1 = dyson_imaginary_first_order(h, pert, beta)
        rho = gibbs_state(h, beta).matrix
        assert np.trace(d1).real == pytest.approx(-beta * np.trace(pert @ rho).real, abs=1e-10)

    def test_renormalized_first_order_state(self, rng):
        # normalizing rho + eps*D1 reproduces the perturbed Gibbs state to O(eps^2)
        h = HermitianOperator(random_hermitian(rng, 6))
        pert = random_hermitian(rng, 6)
        beta = 1.0
        d1 = dyson_imaginary_first_order(h, pert, beta)
        rho = gibbs_state(h, beta).matrix
        for eps in (0.02, 0.01):
            approx = rho + eps * d1
            approx = approx / np.trace(approx).real
            exact = gibbs_state(HermitianOperator(h.matrix + eps * pert), beta).matrix
            assert trace_norm(approx - exact) < 2.0 * eps**2 * beta**2 * operator_norm(pert) ** 2


class TestSecondOrderRemainder:
    def test_constant_stable_across_eps(self, rng):
        # || e^{-beta(H+eps h)}/Z - rho - eps D1 || = C eps^2 beta^2 ||h||^2
        # with C stable within +-50 percent across a 4x range of eps
        h = HermitianOperator(random_hermitian(rng, 8))
        pert = random_hermitian(rng, 8)
        beta = 1.0
        z = np.trace(expm(-beta * h.matrix)).real
        rho = gibbs_state(h, beta).matrix
        d1 = dyson_imaginary_first_order(h, pert, beta)
        h_norm = operator_norm(pert)
        cs = []
        for eps in (0.02, 0.01, 0.005):
            lhs = expm(-beta * (h.matrix + eps * pert)) / z
            resid = trace_norm(lhs - rho - eps * d1)
            cs.append(resid / (eps**2 * beta**2 * h_norm**2))
        center = float(np.exp(np.mean(np.log(cs))))
        assert all(0.5 * center <= c <= 1.5 * center for c in cs)


class TestProjectorForm:
    def test_commuting_result_is_block_diagonal(self):
        h = HermitianOperator(np.diag([0.0, 1.0, 2.0]))
        pert = np.diag([1.0, 0.5, 0.0])
        out = first_order_projector_form(h, pert, 1.0)
        assert operator_norm(out @ h.matrix - h.matrix @ out) < 1e-12

    def test_two_level_analytic(self):
        delta = 1.7
        h = HermitianOperator(np.diag([0.0, delta]))
        x = np.array([[0.0, 1.0], [1.0, 0.0]])
        z = 1 + np.exp(-delta)
        p0, p1 = 1 / z, np.exp(-delta) / z
        out = first_order_projector_form(h, x, 1.0)
        np.testing.assert_allclose(out, -(p0 - p1) / delta * x, atol=1e-12)

    def test_matches_closed_form_random(self, rng):
        h = HermitianOperator(random_hermitian(rng, 8))
        pert = random_hermitian(rng, 8)
        a = first_order_projector_form(h, pert, 1.2)
        b = dyson_imaginary_first_order(h, pert, 1.2)
        assert trace_norm(a - b) < 1e-8

    def test_guard_against_unmerged_near_degeneracy(self, rng):
        # the merging construction guarantees representative gaps exceed the
        # tolerance; force the pathological spectrum to exercise the guard
        op = HermitianOperator(np.diag([0.0, 1.0, 2.0]))
        op._ensure_spectrum()
        evals, v, col_g, groups = op._spectrum
        op._spectrum = (np.array([0.0, 1e-12, 2.0]), v, col_g, groups)
        with pytest.raises(ValueError, match="re-decompose"):
            first_order_projector_form(op, random_hermitian(rng, 3), 1.0)


class TestRealTimeTerms:
    def test_zero_perturbation(self, rng):
        h = random_hermitian(rng, 4)
        u0, a, _ = dyson_real_time_terms(h, np.zeros((4, 4)), 0.5)
        assert operator_norm(a) < 1e-14
        assert operator_norm(u0 - expm(-0.5j * h)) < 1e-12

    def test_commuting_case(self):
        h = HermitianOperator(np.diag([0.0, 1.0, 2.0, 3.0]))
        pert = np.diag([1.0, 0.0, 2.0, 0.5])
        t = 0.7
        _, a, _ = dyson_real_time_terms(h, pert, t)
        u0 = expm(-1j * t * h.matrix)
        np.testing.assert_allclose(a, t * pert @ u0, atol=1e-12)

    def test_second_order_remainder_bound(self, rng):
        h = HermitianOperator(random_hermitian(rng, 4))
        pert = random_hermitian(rng, 4)
        t = 0.3
        u0, a, b_bound = dyson_real_time_terms(h, pert, t)
        assert b_bound == pytest.approx(0.5 * t**2 * operator_norm(pert) ** 2)
        for eps in (1e-2, 1e-3):
            u_eps = expm(-1j * t * (h.matrix + eps * pert))
            resid = operator_norm(u_eps - u0 + 1j * eps * a)
            assert resid <= eps**2 * b_bound * 1.1

    def test_unitarity_of_u0(self, rng):
        u0, _, _ = dyson_real_time_terms(random_hermitian(rng, 5), random_hermitian(rng, 5), 1.1)
        assert operator_norm(u0 @ u0.conj().T - np.eye(5)) < 1e-10
