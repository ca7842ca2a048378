"""Evolution-time, restart, and recursion cost accounting.

All asymptotic formulas are implemented as their dominant term with
constant 1 and are labeled as such; tests and acceptance criteria check
scaling exponents, never absolute values.

Restart statistics follow the success-runs picture: a merge is a sequence
of n steps that each succeed independently with probability p (or a
per-step vector p_k), and any failure restarts the sequence.  <m> is the
expected number of attempted steps until the first complete run, <alpha>
the expected number of failed steps within that process.  The shipped
computation is a Markov absorption solve (states = current run length);
the closed-form success-runs values (1 - p^n)/(p^n (1 - p)) and
p^-n - 1 live in the test suite as the oracle.

<alpha> is defined as expected failed steps per completed merge, which is
the rebuild multiplicity the level recursion needs: each failure forces
two fresh child blocks, so <tau(k)> = 2 <alpha> <tau(k-1)> + <m> with
<tau(0)> = 0 (single sites are prepared exactly, at zero merge cost).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "dephasing_time",
    "conjugation_time",
    "step_time",
    "RestartStats",
    "restart_predictions",
    "RecursionPrediction",
    "recursion_prediction",
    "total_time_prediction",
    "d_dim_prediction",
    "LevelStats",
    "CostReport",
]


def _check_step_args(eps: float, beta: float, h_norm: float) -> float:
    if eps <= 0 or beta <= 0 or h_norm <= 0:
        raise ValueError(f"need positive eps, beta, h_norm; got {eps}, {beta}, {h_norm}")
    x = eps * beta * h_norm
    if x >= 1:
        raise ValueError(f"eps*beta*||h|| = {x:.3f} must be < 1")
    return x


def dephasing_time(eps: float, beta: float, h_norm: float) -> float:
    """Dominant (dephasing) share: log(1/(eps*beta*h)) / (eps^2 beta h^2)."""
    x = _check_step_args(eps, beta, h_norm)
    return float(np.log(1.0 / x) / (eps * eps * beta * h_norm * h_norm))


def conjugation_time(eps: float, beta: float, h_norm: float) -> float:
    """Phase-estimation share: log(1/(eps*beta*h)) / (eps beta h^2)."""
    x = _check_step_args(eps, beta, h_norm)
    return float(np.log(1.0 / x) / (eps * beta * h_norm * h_norm))


def step_time(eps: float, beta: float, h_norm: float) -> float:
    """Evolution time of one perturbative step (dominant + estimation share).

    Monotone decreasing in eps; constant 1 on each term.
    """
    return dephasing_time(eps, beta, h_norm) + conjugation_time(eps, beta, h_norm)


@dataclass(frozen=True)
class RestartStats:
    """Expected steps <m> and expected failures <alpha> per completed merge."""

    m: float
    alpha: float


def _per_step_probabilities(p_step, n_steps: int) -> np.ndarray:
    p = np.atleast_1d(np.asarray(p_step, dtype=float))
    if p.size == 1:
        p = np.full(n_steps, p[0])
    if p.size != n_steps:
        raise ValueError(f"got {p.size} step probabilities for {n_steps} steps")
    if np.any(p <= 0) or np.any(p > 1):
        raise ValueError("step probabilities must lie in (0, 1]")
    return p


def restart_predictions(p_step, n_steps: int) -> RestartStats:
    """Exact <m>, <alpha> from the Markov absorption chain.

    States 0..n track the current run of consecutive successes; step k
    succeeds with probability p_k (scalar p_step broadcasts).  Solves the
    linear absorption equations

        m_k = 1 + p_k m_{k+1} + (1 - p_k) m_0,
        a_k = p_k a_{k+1} + (1 - p_k)(1 + a_0),        m_n = a_n = 0,

    and returns (m_0, a_0).  Handles p = 1 (m = n, alpha = 0) without
    special-casing.
    """
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    p = _per_step_probabilities(p_step, n_steps)
    n = n_steps
    # unknowns x_0..x_{n-1}; x_n = 0
    a = np.eye(n)
    for k in range(n):
        if k + 1 < n:
            a[k, k + 1] -= p[k]
        a[k, 0] -= 1.0 - p[k]
    m = np.linalg.solve(a, np.ones(n))
    alpha = np.linalg.solve(a, 1.0 - p)
    return RestartStats(m=float(m[0]), alpha=float(alpha[0]))


@dataclass(frozen=True)
class RecursionPrediction:
    """Per-level expected merge-step counts of the restart recursion."""

    tau: tuple  # tau[k] for k = 0..levels
    tau_closed_form: tuple
    asymptotic: float | None = None


def recursion_prediction(m, alpha, levels: int, beta: float | None = None,
                         h_norm: float | None = None) -> RecursionPrediction:
    """Iterate <tau(k)> = 2 <alpha_k> <tau(k-1)> + <m_k> from <tau(0)> = 0.

    ``m`` and ``alpha`` may be scalars or per-level sequences (index 0 =
    level 1).  Also returns the geometric closed form (exact for
    level-independent m, alpha) and, when beta and h_norm are given, the
    asymptotic top-level predictor exp((beta*||h|| + log 2) * log N) with
    N = 2^levels and natural logarithms (documented convention).
    """
    if levels < 0:
        raise ValueError("levels must be >= 0")
    m_arr = np.atleast_1d(np.asarray(m, dtype=float))
    a_arr = np.atleast_1d(np.asarray(alpha, dtype=float))
    if m_arr.size == 1:
        m_arr = np.full(max(levels, 1), m_arr[0])
    if a_arr.size == 1:
        a_arr = np.full(max(levels, 1), a_arr[0])
    if levels > 0 and (m_arr.size != levels or a_arr.size != levels):
        raise ValueError(f"need {levels} per-level values, got {m_arr.size}/{a_arr.size}")
    if np.any(m_arr < 0) or np.any(a_arr < 0):
        raise ValueError("m and alpha must be nonnegative")

    tau = [0.0]
    for k in range(levels):
        tau.append(2.0 * a_arr[k] * tau[-1] + m_arr[k])

    closed = [0.0]
    for k in range(1, levels + 1):
        # exact when m, alpha are level-independent: geometric sum in (2 alpha)
        m0, a0 = m_arr[0], a_arr[0]
        r = 2.0 * a0
        closed.append(m0 * k if r == 1.0 else m0 * (r**k - 1.0) / (r - 1.0))

    asymptotic = None
    if beta is not None and h_norm is not None:
        n_sites = 2.0**levels
        asymptotic = float(np.exp((beta * h_norm + np.log(2.0)) * np.log(n_sites)))
    return RecursionPrediction(tau=tuple(tau), tau_closed_form=tuple(closed), asymptotic=asymptotic)


def total_time_prediction(n_sites: float, beta: float, h_norm: float, eps_bar: float) -> float:
    """Dominant total evolution time for a 1D chain: beta * N^(beta ||h||) / eps_bar^2."""
    if n_sites < 1 or beta <= 0 or h_norm < 0 or eps_bar <= 0:
        raise ValueError("invalid prediction arguments")
    return float(beta * n_sites ** (beta * h_norm) / eps_bar**2)


def d_dim_prediction(n_sites: float, dim: int, beta: float, h_norm: float, eps_bar: float) -> float:
    """Dominant total time in D dimensions: beta * exp(2 beta ||h|| D N^(D-1)) / eps_bar^2.

    At D = 1 this reads beta * e^(2 beta ||h||) / eps_bar^2, which matches
    :func:`total_time_prediction` only up to the convention relating
    N^(beta ||h||) and e^(2 beta ||h||); both predictors are exposed side
    by side on purpose.
    """
    if dim < 1:
        raise ValueError(f"dimension must be >= 1, got {dim}")
    if n_sites < 1 or beta <= 0 or h_norm < 0 or eps_bar <= 0:
        raise ValueError("invalid prediction arguments")
    return float(beta * np.exp(2.0 * beta * h_norm * dim * n_sites ** (dim - 1)) / eps_bar**2)


@dataclass
class LevelStats:
    """Counters for one recursion level of a prepare-chain run.

    In faithful mode these are realized integer counts; in single-pass
    mode they hold the analytic expectations.  ``run_lengths`` are the
    per-build m-samples (steps of a merge process up to its completing
    run) and ``tau_samples`` the recursion-accounted per-build totals
    (own steps plus failure-triggered child rebuild steps).
    """

    level: int
    merge_attempts: float = 0
    failures: float = 0
    steps_attempted: float = 0
    builds_completed: float = 0
    run_lengths: list = field(default_factory=list)
    tau_samples: list = field(default_factory=list)

    def mean_run_length(self) -> float:
        return float(np.mean(self.run_lengths)) if self.run_lengths else float("nan")

    def mean_tau(self) -> float:
        return float(np.mean(self.tau_samples)) if self.tau_samples else float("nan")


@dataclass
class CostReport:
    """Realized and predicted cost accounting of one prepare-chain run.

    ``total_steps`` and ``total_time`` obey the accounting identity
    total_time = total_steps * step_time_per_step exactly.  Predictions
    are per level (index 0 = level 1); ratios are empirical/predicted
    where both sides exist.
    """

    cost_mode: str
    n_sites: int
    levels: list  # of LevelStats, index 0 = level 1
    step_time_per_step: float
    total_steps: float
    total_time: float
    predicted_m: list
    predicted_alpha: list
    predicted_tau: list
    predicted_total_steps: float
    predicted_total_time: float
    error_budget: dict
    seed: object = None

    def __post_init__(self):
        for ls in self.levels:
            if ls.steps_attempted < 0 or ls.failures < 0 or ls.merge_attempts < 0:
                raise ValueError("negative counter in cost report")
        level_steps = sum(ls.steps_attempted for ls in self.levels)
        if abs(level_steps - self.total_steps) > 1e-6 * max(1.0, abs(self.total_steps)):
            raise ValueError(
                f"per-level steps {level_steps} do not add up to total {self.total_steps}"
            )

    def empirical_m(self) -> list:
        return [ls.mean_run_length() for ls in self.levels]

    def empirical_alpha(self) -> list:
        return [
            ls.failures / ls.builds_completed if ls.builds_completed else float("nan")
            for ls in self.levels
        ]

    def empirical_tau(self) -> list:
        return [ls.mean_tau() for ls in self.levels]

    def comparison_ratios(self) -> dict:
        """Empirical/predicted ratios per level (NaN where undefined)."""

        def ratio(emp, pred):
            return [
                e / p if (p and np.isfinite(e)) else float("nan")
                for e, p in zip(emp, pred)
            ]

        return {
            "m": ratio(self.empirical_m(), self.predicted_m),
            "alpha": ratio(self.empirical_alpha(), self.predicted_alpha),
            "tau": ratio(self.empirical_tau(), self.predicted_tau),
            "total_time": (
                self.total_time / self.predicted_total_time
                if self.predicted_total_time
                else float("nan")
            ),
        }
