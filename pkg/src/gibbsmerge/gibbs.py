"""Exact thermal states and perturbation-series coefficient operators.

These are the ground-truth objects the simulated channels are judged
against: the Gibbs state e^{-beta H}/Z, the first-order imaginary-time
response of the Gibbs operator to a perturbation H -> H + eps*h, and the
first- and second-order pieces of the real-time evolution
e^{-i(H + eps h)t}.

Normalization convention.  The perturbation series is taken for the
operator e^{-beta(H + eps h)} / Z with Z = Tr e^{-beta H} held fixed, i.e.
every intermediate state shares the *unperturbed* partition function.
With p_k = e^{-beta E_k}/Z this makes the first-order coefficient operator

    D1 = -(1/Z) * integral_0^beta  e^{-(beta-b) H} h e^{-b H} db,

whose matrix blocks between eigenspaces (E_k, E_l) of H carry the closed
form -beta p_k on diagonal blocks and -(p_k - p_l)/(E_l - E_k) between
distinct eigenspaces.  The trace of D1 is -beta Tr(h rho), which is the
first-order change of the partition-function ratio; renormalizing
rho + eps*D1 restores unit trace to O(eps^2).

All integrals are evaluated in closed form in the eigenbasis; numerical
quadrature exists only in the test suite as an independent oracle.
"""

from __future__ import annotations

import numpy as np

from .operators import DensityMatrix, HermitianOperator, _as_matrix

__all__ = [
    "GibbsFamily",
    "gibbs_state",
    "dyson_imaginary_first_order",
    "first_order_projector_form",
    "dyson_real_time_terms",
]


def _as_operator(a) -> HermitianOperator:
    return a if isinstance(a, HermitianOperator) else HermitianOperator(_as_matrix(a))


def _log_partition(col_energies: np.ndarray, beta: float) -> float:
    """log Tr e^{-beta H} from per-column energies, overflow-safe."""
    x = -beta * col_energies
    m = float(x.max())
    return m + float(np.log(np.exp(x - m).sum()))


class GibbsFamily:
    """Thermal family of a fixed Hamiltonian at inverse temperature beta.

    ``intermediate(b)`` returns e^{-b H}/Z for 0 <= b <= beta, where the
    partition function Z = Tr e^{-beta H} is always taken at the full
    beta; only ``intermediate(beta)`` is a unit-trace state.
    """

    def __init__(self, hamiltonian, beta: float):
        if beta <= 0:
            raise ValueError(f"beta must be positive, got {beta}")
        self.hamiltonian = _as_operator(hamiltonian)
        self.beta = float(beta)
        _, col_e, _ = self.hamiltonian.eigenbasis()
        self.log_partition = _log_partition(col_e, self.beta)

    @property
    def partition_function(self) -> float:
        return float(np.exp(self.log_partition))

    def weights(self) -> np.ndarray:
        """Boltzmann weights p_k = e^{-beta E_k}/Z per merged eigenvalue."""
        return np.exp(-self.beta * self.hamiltonian.eigenvalues - self.log_partition)

    def intermediate(self, beta_tilde: float) -> np.ndarray:
        if not 0 <= beta_tilde <= self.beta + 1e-12:
            raise ValueError(f"beta_tilde {beta_tilde} outside [0, {self.beta}]")
        return self.hamiltonian.apply_spectral(
            lambda e: np.exp(-beta_tilde * e - self.log_partition)
        )

    def state(self) -> DensityMatrix:
        return DensityMatrix(self.intermediate(self.beta), validate=False)


def gibbs_state(hamiltonian, beta: float) -> DensityMatrix:
    """e^{-beta H} / Tr e^{-beta H}, computed through the spectrum.

    The minimum eigenvalue is subtracted before exponentiating, so the
    computation never overflows regardless of the spectral offset.
    """
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    op = _as_operator(hamiltonian)
    v, col_e, _ = op.eigenbasis()
    w = np.exp(-beta * (col_e - col_e.min()))
    w /= w.sum()
    return DensityMatrix((v * w) @ v.conj().T, validate=False)


def dyson_imaginary_first_order(hamiltonian, perturbation, beta: float) -> np.ndarray:
    """First-order imaginary-time response coefficient of the Gibbs operator.

    Returns D1 such that e^{-beta(H + eps h)}/Z = rho + eps*D1 + O(eps^2),
    with Z = Tr e^{-beta H} (see module docstring).  Evaluated in closed
    form in the eigenbasis of H: blocks within one eigenspace get
    -beta p_k, blocks between eigenspaces get -(p_k - p_l)/(E_l - E_k).
    """
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    op = _as_operator(hamiltonian)
    h = _as_matrix(perturbation)
    if h.shape != op.matrix.shape:
        raise ValueError(f"dimension mismatch: H is {op.matrix.shape}, h is {h.shape}")
    v, col_e, col_g = op.eigenbasis()
    log_z = _log_partition(col_e, beta)
    p = np.exp(-beta * col_e - log_z)

    de = col_e[:, None] - col_e[None, :]  # E_i - E_j
    same = col_g[:, None] == col_g[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        coeff = -(p[:, None] - p[None, :]) / (-de)  # -(p_i - p_j)/(E_j - E_i)
    coeff[same] = (-beta * p[:, None] * np.ones_like(de))[same]

    h_eig = v.conj().T @ h @ v
    return v @ (coeff * h_eig) @ v.conj().T


def first_order_projector_form(hamiltonian, perturbation, beta: float) -> np.ndarray:
    """Projector-sum evaluation of the same first-order coefficient.

    Computes -sum_k p_k (beta P_k h P_k + sum_{l != k} (P_l h P_k +
    P_k h P_l)/(E_l - E_k)); the beta on the diagonal part is what the
    imaginary-time integral produces there, so this equals
    :func:`dyson_imaginary_first_order` identically.  Kept as a separate
    code path (explicit projector algebra versus the vectorized
    eigenbasis route) so the two evaluations cross-check each other.
    """
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    op = _as_operator(hamiltonian)
    h = _as_matrix(perturbation)
    if h.shape != op.matrix.shape:
        raise ValueError(f"dimension mismatch: H is {op.matrix.shape}, h is {h.shape}")
    evals = op.eigenvalues
    projs = op.projectors
    gaps = np.diff(evals)
    if gaps.size and float(gaps.min()) < op.degeneracy_tol:
        raise ValueError(
            f"distinct eigenvalues closer ({float(gaps.min()):.3e}) than the degeneracy "
            f"tolerance {op.degeneracy_tol:.3e}; re-decompose with a larger tolerance"
        )
    log_z = _log_partition(op.eigenbasis()[1], beta)
    p = np.exp(-beta * evals - log_z)

    acc = np.zeros_like(h)
    for k, pk in enumerate(p):
        pk_h = projs[k] @ h
        acc += beta * pk * (pk_h @ projs[k])
        for l in range(len(evals)):
            if l == k:
                continue
            cross = projs[l] @ h @ projs[k] + pk_h @ projs[l]
            acc += pk * cross / (evals[l] - evals[k])
    return -acc


def dyson_real_time_terms(hamiltonian, perturbation, t: float):
    """First- and second-order pieces of e^{-i(H + eps h)t}.

    Returns (U0, A, b_bound) with U0 = e^{-iHt} exact through the
    spectrum, A = integral_0^t U0(t-s) h U0(s) ds in closed form per
    eigenbasis block, and b_bound = t^2 ||h||^2 / 2, an operator-norm
    bound on the second-order remainder:
    || e^{-i(H+eps h)t} - U0 + i eps A || <= eps^2 * b_bound (1 + o(1)).
    """
    op = _as_operator(hamiltonian)
    h = _as_matrix(perturbation)
    if h.shape != op.matrix.shape:
        raise ValueError(f"dimension mismatch: H is {op.matrix.shape}, h is {h.shape}")
    v, col_e, col_g = op.eigenbasis()
    phase = np.exp(-1j * t * col_e)
    u0 = (v * phase) @ v.conj().T

    de = col_e[:, None] - col_e[None, :]  # E_i - E_j
    same = col_g[:, None] == col_g[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        factor = (phase[None, :] - phase[:, None]) / (1j * de)
    factor[same] = (t * phase[:, None] * np.ones_like(de))[same]

    h_eig = v.conj().T @ h @ v
    a = v @ (factor * h_eig) @ v.conj().T

    h_norm = float(np.abs(np.linalg.eigvalsh(0.5 * (h + h.conj().T))).max())
    b_bound = 0.5 * t * t * h_norm * h_norm
    return u0, a, b_bound
