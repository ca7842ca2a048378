"""The two subroutines of one perturbative update.

Conjugation: the probabilistic map rho -> K rho K / Tr(K rho K) with
K = 1 - (eps*beta/2) h for a positive-semidefinite link term h.  The
success probability Tr(K rho K) is bounded below by 1 - eps*beta*||h||.
The imperfect variant models finite-accuracy phase estimation by snapping
each eigenvalue of h to a grid before building K; readout leakage is not
sampled, only budgeted.

Dephasing: removal of coherences between eigenspaces of the updated
Hamiltonian G.  The ideal operation keeps exactly the diagonal blocks of
rho in G's eigenbasis.  The physical realization averages the evolved
state over a Gaussian-distributed evolution time, which multiplies the
(E_j, E_k) block by exp(-sigma^2 (E_j - E_k)^2 / 2); this is evaluated
analytically here, with explicit time quadrature available as a
cross-check oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .operators import DensityMatrix, HermitianOperator, _as_matrix

__all__ = [
    "ChannelFidelity",
    "ConjugationResult",
    "conjugation_ideal",
    "conjugation_binned",
    "dephase_ideal",
    "dephase_gaussian",
    "dephase_gaussian_quadrature",
    "binned_hamiltonian",
]


@dataclass(frozen=True)
class ChannelFidelity:
    """Accuracy model for the two channels.

    ideal mode ignores every knob.  imperfect mode needs:

    - ``delta``: phase-estimation accuracy as a dimensionless time*energy
      product; the energy grid spacing is delta / pe_time.
    - ``eps_pe``: leakage probability bound of the estimation readout.
    - ``zeta``: dephasing accuracy (energy); coherences across gaps well
      above zeta are suppressed.  The Gaussian width is sigma = c/zeta.
    - ``pe_time``: evolution time of the estimated unitary; resolved to
      1/(2||h||) at application time when left unset.
    - ``quadrature_nodes`` / ``quadrature_radius``: node count and
      truncation radius (in units of sigma) for the time-integral oracle.
    """

    mode: str = "ideal"
    delta: float | None = None
    eps_pe: float | None = None
    zeta: float | None = None
    c: float = 1.0
    pe_time: float | None = None
    quadrature_nodes: int = 4001
    quadrature_radius: float = 8.0

    def __post_init__(self):
        if self.mode not in ("ideal", "imperfect"):
            raise ValueError(f"unknown fidelity mode {self.mode!r}")
        if self.mode == "imperfect":
            if self.delta is None or self.delta <= 0:
                raise ValueError("imperfect mode requires delta > 0")
            if self.zeta is None or self.zeta <= 0:
                raise ValueError("imperfect mode requires zeta > 0")
            if self.eps_pe is None or not 0 <= self.eps_pe < 1:
                raise ValueError("imperfect mode requires 0 <= eps_pe < 1")
            if self.c < 1:
                raise ValueError("log-factor constant c must be >= 1")

    @property
    def sigma(self) -> float:
        """Gaussian dephasing width c/zeta (imperfect mode only)."""
        if self.mode != "imperfect":
            raise ValueError("sigma is only defined in imperfect mode")
        return self.c / self.zeta

    @classmethod
    def ideal(cls) -> "ChannelFidelity":
        return cls(mode="ideal")

    @classmethod
    def imperfect(cls, delta: float, zeta: float, eps_pe: float, **kwargs) -> "ChannelFidelity":
        return cls(mode="imperfect", delta=delta, zeta=zeta, eps_pe=eps_pe, **kwargs)


@dataclass(frozen=True)
class ConjugationResult:
    """Post-selected state, its success probability, and budgeted errors.

    ``success_probability`` is the trace of the unnormalized post-selected
    operator; ``state`` is renormalized to unit trace.  ``error_budget``
    carries the analytic trace-norm allowances of the imperfect model
    (binning and leakage), not measured distances.
    """

    state: DensityMatrix
    success_probability: float
    evolution_time_charged: float
    error_budget: dict = field(default_factory=dict)
    flags: tuple = ()


def _conjugation_time(eps: float, beta: float, h_norm: float) -> float:
    """Phase-estimation share of the step's evolution time."""
    x = eps * beta * h_norm
    if x == 0:
        return 0.0
    return float(np.log(1.0 / x) / (eps * beta * h_norm * h_norm))


def _check_conjugation_inputs(rho, h_shifted, eps: float, beta: float):
    rho_m = _as_matrix(rho)
    h = h_shifted if isinstance(h_shifted, HermitianOperator) else HermitianOperator(h_shifted)
    if rho_m.shape != h.matrix.shape:
        raise ValueError(f"state {rho_m.shape} and term {h.matrix.shape} dimensions differ")
    if eps < 0 or beta <= 0:
        raise ValueError(f"need eps >= 0 and beta > 0, got eps={eps}, beta={beta}")
    if h.min_eigenvalue() < -1e-10:
        raise ValueError(
            f"link term must be positive semidefinite (min eigenvalue "
            f"{h.min_eigenvalue():.3e}); apply shift_psd first"
        )
    h_norm = h.operator_norm()
    if eps * beta * h_norm > 1.0 + 1e-12:
        raise ValueError(
            f"eps*beta*||h|| = {eps * beta * h_norm:.3f} > 1; the Kraus operator "
            "would leave (0, 1] — reduce the step size"
        )
    return rho_m, h, h_norm


def _apply_kraus(rho_m: np.ndarray, k: np.ndarray) -> tuple[DensityMatrix, float]:
    out = k @ rho_m @ k.conj().T
    p = float(np.trace(out).real)
    return DensityMatrix(out / p, validate=False), p


def conjugation_ideal(rho, h_shifted, eps: float, beta: float) -> ConjugationResult:
    """Apply K = 1 - (eps*beta/2) h and post-select.

    The success probability Tr(K rho K) satisfies
    p >= 1 - eps*beta*||h_shifted||.
    """
    rho_m, h, h_norm = _check_conjugation_inputs(rho, h_shifted, eps, beta)
    k = np.eye(h.dim) - (0.5 * eps * beta) * h.matrix
    state, p = _apply_kraus(rho_m, k)
    return ConjugationResult(
        state=state,
        success_probability=p,
        evolution_time_charged=_conjugation_time(eps, beta, h_norm),
        error_budget={"pe_binning": 0.0, "pe_leakage": 0.0},
    )


def conjugation_binned(
    rho, h_shifted, eps: float, beta: float, fidelity: ChannelFidelity
) -> ConjugationResult:
    """Conjugation with finite phase-estimation accuracy.

    Each eigenvalue E_a of h_shifted is replaced by the floor of its grid
    cell, grid spacing delta/pe_time, before building the Kraus operator.
    Leakage outside the accuracy window is not sampled; its trace-norm
    allowance 2*eps_pe is reported in the error budget alongside the
    binning allowance eps*beta*delta.
    """
    if fidelity.mode != "imperfect":
        raise ValueError("conjugation_binned requires an imperfect-mode fidelity")
    rho_m, h, h_norm = _check_conjugation_inputs(rho, h_shifted, eps, beta)
    t = fidelity.pe_time
    if t is None:
        t = 1.0 / (2.0 * h_norm) if h_norm > 0 else 1.0
    spacing = fidelity.delta / t
    flags = ()
    if spacing >= h_norm > 0:
        flags = ("degenerate_grid",)
    v, col_e, _ = h.eigenbasis()
    binned = np.floor(col_e / spacing) * spacing
    # eigenvalues of a PSD term sit at >= 0; keep tiny negatives at zero
    binned = np.maximum(binned, 0.0)
    k = (v * (1.0 - 0.5 * eps * beta * binned)) @ v.conj().T
    state, p = _apply_kraus(rho_m, k)
    return ConjugationResult(
        state=state,
        success_probability=p,
        evolution_time_charged=_conjugation_time(eps, beta, h_norm),
        error_budget={
            "pe_binning": eps * beta * fidelity.delta,
            "pe_leakage": 2.0 * fidelity.eps_pe,
        },
        flags=flags,
    )


def dephase_ideal(rho, basis: HermitianOperator) -> DensityMatrix:
    """Keep exactly the diagonal blocks of rho in the eigenbasis of G.

    The output commutes with G and the trace is preserved.  Degenerate
    eigenspaces (merged by G's degeneracy tolerance) are preserved as
    whole blocks.
    """
    rho_m = _as_matrix(rho)
    v, _, col_g = basis.eigenbasis()
    mask = (col_g[:, None] == col_g[None, :]).astype(float)
    rho_eig = v.conj().T @ rho_m @ v
    return DensityMatrix(v @ (mask * rho_eig) @ v.conj().T, validate=False)


def dephase_gaussian(rho, basis: HermitianOperator, fidelity: ChannelFidelity) -> DensityMatrix:
    """Gaussian-time-averaged dephasing in the eigenbasis of G.

    The (E_j, E_k) block of rho picks up the Gaussian characteristic
    function exp(-sigma^2 (E_j - E_k)^2 / 2), the exact average of
    U(t) rho U(t)^dag over t ~ N(0, sigma^2).  Diagonal blocks keep
    weight exactly 1; the map converges to :func:`dephase_ideal` as
    sigma -> infinity.
    """
    sigma = fidelity.sigma
    rho_m = _as_matrix(rho)
    v, col_e, col_g = basis.eigenbasis()
    de = col_e[:, None] - col_e[None, :]
    weight = np.exp(-0.5 * (sigma * de) ** 2)
    weight[col_g[:, None] == col_g[None, :]] = 1.0
    rho_eig = v.conj().T @ rho_m @ v
    return DensityMatrix(v @ (weight * rho_eig) @ v.conj().T, validate=False)


def dephase_gaussian_quadrature(
    rho, basis: HermitianOperator, fidelity: ChannelFidelity
) -> DensityMatrix:
    """Cross-check oracle: evaluate the Gaussian time average by quadrature.

    Integrates g_sigma(t) U(t) rho U(t)^dag over t in
    [-radius*sigma, radius*sigma] with a trapezoid rule on
    ``quadrature_nodes`` nodes.  Exists to validate the closed-form
    characteristic-function path; it is never used by the merge engine.
    """
    sigma = fidelity.sigma
    rho_m = _as_matrix(rho)
    v, col_e, _ = basis.eigenbasis()
    radius = fidelity.quadrature_radius * sigma
    ts = np.linspace(-radius, radius, fidelity.quadrature_nodes)
    weights = np.full(ts.size, ts[1] - ts[0])
    weights[0] *= 0.5
    weights[-1] *= 0.5
    gauss = np.exp(-0.5 * (ts / sigma) ** 2) / (sigma * np.sqrt(2 * np.pi))
    rho_eig = v.conj().T @ rho_m @ v
    acc = np.zeros_like(rho_eig)
    for t, w, g in zip(ts, weights, gauss):
        phase = np.exp(-1j * t * col_e)
        acc += (w * g) * (phase[:, None] * rho_eig * phase[None, :].conj())
    out = v @ acc @ v.conj().T
    # renormalize away the tail mass truncated by the finite window
    return DensityMatrix.from_unnormalized(out, validate=False)


def binned_hamiltonian(basis: HermitianOperator, zeta: float) -> tuple[HermitianOperator, np.ndarray]:
    """Coarse-grain the spectrum so all distinct gaps are at least zeta.

    Greedily groups the sorted eigenvalues into bins of intra-bin spread
    < zeta and replaces every eigenvalue by its bin minimum.  Returns
    (H_tilde, chi) with chi = H_tilde - G, ||chi|| <= zeta, and distinct
    eigenvalues of H_tilde separated by >= zeta.
    """
    if zeta <= 0:
        raise ValueError(f"zeta must be positive, got {zeta}")
    v, col_e, _ = basis.eigenbasis()
    rep = np.empty_like(col_e)
    bin_start = col_e[0] if col_e.size else 0.0
    for i, e in enumerate(col_e):
        if e - bin_start >= zeta:
            bin_start = e
        rep[i] = bin_start
    h_tilde = HermitianOperator((v * rep) @ v.conj().T, validate=False)
    chi = h_tilde.matrix - basis.matrix
    return h_tilde, chi
