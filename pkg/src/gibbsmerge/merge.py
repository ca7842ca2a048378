"""One perturbative update step, the merge sequence, and the full recursion.

A merge drives the coupling of the boundary link from 0 to 1 through a
grid of small increments.  Each increment is one perturbative step:
probabilistic conjugation (which may fail and force a restart of the
whole merge) followed by dephasing in the eigenbasis of the updated block
Hamiltonian.  The binary recursion thermalizes single sites exactly,
then merges blocks pairwise until the whole chain is thermal.

The channel outputs along a merge are deterministic: restarts rebuild
exactly the same intermediate states.  The planner therefore computes
every state and success probability once (a :class:`MergePlan`) and the
stochastic part of a run reduces to Bernoulli sampling against the
memoized probabilities.  Faithful mode samples the restart tree
literally, charging every attempted step; a failure destroys both input
blocks and rebuilds them recursively.  Single-pass mode charges the
analytic expectations instead, which keeps large runs tractable.

Cost accounting matches the level recursion <tau(k)> = 2 <alpha> <tau(k-1)>
+ <m>: a build's tau counts its own merge steps plus the failure-triggered
rebuilds of its children; the one-time initial build of each block is
charged at that block's own level (single sites are free).  Every
attempted step anywhere in the process is charged exactly once, and
charged time is steps * step_time with the step time of the schedule's
nominal eps (the final, possibly smaller, grid step is charged at the
same rate).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import costs
from .chains import ChainModel, build_block_hamiltonian, shift_psd
from .channels import (
    ChannelFidelity,
    conjugation_binned,
    conjugation_ideal,
    dephase_gaussian,
    dephase_ideal,
)
from .costs import CostReport, LevelStats, RestartStats, restart_predictions
from .gibbs import gibbs_state
from .operators import DensityMatrix, HermitianOperator, embed_local

__all__ = [
    "ResourceCapError",
    "MergeSchedule",
    "StepOutcome",
    "MergeOutcome",
    "derived_fidelity",
    "perturbative_step",
    "merge_blocks",
    "MergePlan",
    "prepare_chain",
    "sequence_error_budget",
]

LEDGER_KEYS = ("conjugation_second_order", "dephasing_residual", "pe_binning", "pe_leakage")


class ResourceCapError(RuntimeError):
    """Raised when the requested Hilbert space exceeds the configured cap."""


def derived_fidelity(
    eps: float,
    beta: float,
    h_norm: float,
    c: float = 1.0,
    delta: float | None = None,
    zeta: float | None = None,
    eps_pe: float | None = None,
    pe_time: float | None = None,
    **kwargs,
) -> ChannelFidelity:
    """Imperfect fidelity with the standard step-size-derived accuracies.

    Defaults keep every imperfection at the same order as the step's own
    second-order error: zeta = eps^2 beta ||h||^2, delta = eps beta ||h||^2
    (so eps*beta*delta = eps^2 beta^2 ||h||^2), eps_pe = eps^2 beta^2 ||h||^2.
    """
    if h_norm <= 0:
        raise ValueError("derived fidelity needs a positive link norm")
    hh = h_norm * h_norm
    return ChannelFidelity.imperfect(
        delta=delta if delta is not None else eps * beta * hh,
        zeta=zeta if zeta is not None else eps * eps * beta * hh,
        eps_pe=eps_pe if eps_pe is not None else min(eps * eps * beta * beta * hh, 0.999),
        c=c,
        pe_time=pe_time,
        **kwargs,
    )


@dataclass(frozen=True)
class MergeSchedule:
    """Step size, coupling grid, and channel fidelity of one merge.

    The grid runs 0 = lambda_0 < ... < lambda_n = 1 with uniform spacing
    eps except for a final shorter step that lands exactly at coupling 1.
    """

    eps: float
    beta: float
    h_norm: float
    fidelity: ChannelFidelity
    coupling_grid: tuple

    @classmethod
    def from_eps(cls, eps: float, beta: float, h_norm: float, fidelity="ideal") -> "MergeSchedule":
        if beta <= 0:
            raise ValueError(f"beta must be positive, got {beta}")
        if h_norm < 0:
            raise ValueError(f"h_norm must be nonnegative, got {h_norm}")
        if h_norm == 0:
            grid = (0.0, 1.0)
            return cls(1.0, beta, 0.0, ChannelFidelity.ideal(), grid)
        if not 0 < eps <= 1:
            raise ValueError(f"eps must lie in (0, 1], got {eps}")
        if eps * beta * h_norm > 1:
            raise ValueError(
                f"eps*beta*||h|| = {eps * beta * h_norm:.3f} > 1; reduce the step size"
            )
        n = max(1, math.ceil(1.0 / eps - 1e-9))
        grid = [min(k * eps, 1.0) for k in range(n)] + [1.0]
        if isinstance(fidelity, ChannelFidelity):
            fid = fidelity
        elif fidelity == "ideal":
            fid = ChannelFidelity.ideal()
        elif fidelity == "imperfect":
            fid = derived_fidelity(eps, beta, h_norm)
        else:
            raise ValueError(f"unknown fidelity spec {fidelity!r}")
        return cls(float(eps), float(beta), float(h_norm), fid, tuple(grid))

    @classmethod
    def from_target_error(
        cls, eps_bar: float, n_sites: int, beta: float, h_norm: float, fidelity="ideal"
    ) -> "MergeSchedule":
        """Uniform eps = eps_bar / (N beta^2 ||h||^2) for a total error O(eps_bar)."""
        if not 0 < eps_bar < 1:
            raise ValueError(f"eps_bar must lie in (0, 1), got {eps_bar}")
        if h_norm == 0:
            return cls.from_eps(1.0, beta, 0.0, fidelity)
        eps = eps_bar / (n_sites * beta * beta * h_norm * h_norm)
        return cls.from_eps(min(eps, 1.0), beta, h_norm, fidelity)

    @property
    def n_steps(self) -> int:
        return len(self.coupling_grid) - 1

    @property
    def step_sizes(self) -> np.ndarray:
        return np.diff(np.asarray(self.coupling_grid))

    @property
    def step_time(self) -> float:
        """Charged evolution time per attempted step (0 for a trivial link)."""
        if self.h_norm == 0:
            return 0.0
        return costs.step_time(self.eps, self.beta, self.h_norm)


@dataclass(frozen=True)
class StepOutcome:
    """Result of one perturbative step.

    ``state`` is present only on success.  The ledger holds the analytic
    per-step trace-norm allowances (all nonnegative); ``evolution_time_charged``
    is charged whether or not the step succeeded.
    """

    succeeded: bool
    state: DensityMatrix | None
    success_probability: float
    error_ledger: dict
    evolution_time_charged: float


def _step_ledger(schedule: MergeSchedule, eps_k: float, conj_budget: dict) -> dict:
    fid = schedule.fidelity
    dephasing = 0.0
    if fid.mode == "imperfect":
        dephasing = schedule.beta * fid.zeta
    return {
        "conjugation_second_order": (eps_k * schedule.beta * schedule.h_norm) ** 2,
        "dephasing_residual": dephasing,
        "pe_binning": conj_budget.get("pe_binning", 0.0),
        "pe_leakage": conj_budget.get("pe_leakage", 0.0),
    }


def _deterministic_step(
    rho: DensityMatrix,
    hamiltonian: HermitianOperator,
    h_shifted: HermitianOperator,
    step_index: int,
    schedule: MergeSchedule,
):
    """Channel composition of step k without sampling.

    Returns (post_state, success_probability, ledger).  The dephasing
    basis is the block Hamiltonian at the *end-of-step* coupling.
    """
    grid = schedule.coupling_grid
    if not 0 <= step_index < schedule.n_steps:
        raise ValueError(f"step index {step_index} outside schedule of {schedule.n_steps} steps")
    if rho.dim != hamiltonian.dim or rho.dim != h_shifted.dim:
        raise ValueError("state, Hamiltonian, and link dimensions differ")
    eps_k = float(grid[step_index + 1] - grid[step_index])

    if schedule.h_norm == 0 or h_shifted.operator_norm() == 0:
        return rho, 1.0, dict.fromkeys(LEDGER_KEYS, 0.0)

    if schedule.fidelity.mode == "imperfect":
        conj = conjugation_binned(rho, h_shifted, eps_k, schedule.beta, schedule.fidelity)
    else:
        conj = conjugation_ideal(rho, h_shifted, eps_k, schedule.beta)

    basis = HermitianOperator(
        hamiltonian.matrix + grid[step_index + 1] * h_shifted.matrix, validate=False
    )
    if schedule.fidelity.mode == "imperfect":
        state = dephase_gaussian(conj.state, basis, schedule.fidelity)
    else:
        state = dephase_ideal(conj.state, basis)
    return state, conj.success_probability, _step_ledger(schedule, eps_k, conj.error_budget)


def perturbative_step(
    rho: DensityMatrix,
    hamiltonian: HermitianOperator,
    h_shifted: HermitianOperator,
    step_index: int,
    schedule: MergeSchedule,
    rng: np.random.Generator,
) -> StepOutcome:
    """Advance the coupling by one grid step, sampling the post-selection.

    On success the returned state approximates the Gibbs state of
    H + lambda_{k+1} h to second order in the step size (plus whatever
    error the input carried).  On failure the step still charges its
    evolution time and returns no state.
    """
    state, p, ledger = _deterministic_step(rho, hamiltonian, h_shifted, step_index, schedule)
    succeeded = bool(rng.random() < p)
    return StepOutcome(
        succeeded=succeeded,
        state=state if succeeded else None,
        success_probability=p,
        error_ledger=ledger,
        evolution_time_charged=schedule.step_time,
    )


@dataclass
class MergeOutcome:
    """Outcome of one merge sequence attempt (no restarts)."""

    state: DensityMatrix | None
    failed_at: int | None
    steps_attempted: int
    success_probabilities: list
    time_charged: float
    error_ledger: dict

    @property
    def succeeded(self) -> bool:
        return self.failed_at is None


def merge_blocks(
    rho_left: DensityMatrix,
    rho_right: DensityMatrix,
    h_left: HermitianOperator,
    h_right: HermitianOperator,
    link_shifted: HermitianOperator,
    schedule: MergeSchedule,
    rng: np.random.Generator,
) -> MergeOutcome:
    """Run one full merge sequence on the product of two block states.

    ``link_shifted`` must already be PSD-shifted and embedded in the merged
    block's dimension.  Stops at the first failed step, returning its index
    and all time charged so far (the failed step included).
    """
    dim_l, dim_r = rho_left.dim, rho_right.dim
    rho = DensityMatrix(np.kron(rho_left.matrix, rho_right.matrix), validate=False)
    base = HermitianOperator(
        np.kron(h_left.matrix, np.eye(dim_r)) + np.kron(np.eye(dim_l), h_right.matrix),
        validate=False,
    )
    if base.dim != link_shifted.dim:
        raise ValueError("link term dimension does not match the merged block")
    ledger = dict.fromkeys(LEDGER_KEYS, 0.0)
    probs: list[float] = []
    time = 0.0
    for k in range(schedule.n_steps):
        out = perturbative_step(rho, base, link_shifted, k, schedule, rng)
        probs.append(out.success_probability)
        time += out.evolution_time_charged
        for key in LEDGER_KEYS:
            ledger[key] += out.error_ledger[key]
        if not out.succeeded:
            return MergeOutcome(None, k, k + 1, probs, time, ledger)
        rho = out.state
    return MergeOutcome(rho, None, schedule.n_steps, probs, time, ledger)


@dataclass
class _NodePlan:
    level: int
    position: int
    first_site: int
    last_site: int
    p_steps: np.ndarray
    state: DensityMatrix
    restart: RestartStats
    tau_hat: float
    expected_builds: float
    error_budget: dict


class MergePlan:
    """Memoized deterministic content of a prepare-chain run.

    Holds every intermediate block state, the per-step success
    probabilities of every merge node, and the exact restart/recursion
    predictions computed from them.  Sampling a faithful run against the
    plan costs only Bernoulli draws.
    """

    def __init__(self, model: ChainModel, beta: float, schedule: MergeSchedule):
        self.model = model
        self.beta = beta
        self.schedule = schedule
        self.n_levels = int(round(math.log2(model.n_sites)))
        self.nodes: dict = {}
        self._leaf_states: list = []
        self._build_states()
        self._predict()

    # -- deterministic construction ------------------------------------

    def _build_states(self) -> None:
        model, beta = self.model, self.beta
        for i in range(model.n_sites):
            site = HermitianOperator(model.site_terms[i])
            self._leaf_states.append(gibbs_state(site, beta))
        for level in range(1, self.n_levels + 1):
            width = 2**level
            for pos in range(model.n_sites // width):
                self._plan_node(level, pos)

    def _child_state(self, level: int, pos: int) -> DensityMatrix:
        if level == 0:
            return self._leaf_states[pos]
        return self.nodes[(level, pos)].state

    def _child_budget(self, level: int, pos: int) -> dict:
        if level == 0:
            return dict.fromkeys(LEDGER_KEYS, 0.0)
        return self.nodes[(level, pos)].error_budget

    def _plan_node(self, level: int, pos: int) -> None:
        model, schedule = self.model, self.schedule
        width = 2**level
        first = pos * width
        last = first + width - 1
        mid = first + width // 2 - 1  # left block's last site

        left = self._child_state(level - 1, 2 * pos)
        right = self._child_state(level - 1, 2 * pos + 1)
        h_left = build_block_hamiltonian(model, first, mid)
        h_right = build_block_hamiltonian(model, mid + 1, last)
        base = HermitianOperator(
            np.kron(h_left.matrix, np.eye(right.dim))
            + np.kron(np.eye(left.dim), h_right.matrix),
            validate=False,
        )
        local_link, _shift = shift_psd(model.link_terms[mid])
        dims = model.site_dims(first, last)
        link = embed_local(local_link.matrix, (mid - first, mid - first + 1), dims)

        rho = DensityMatrix(np.kron(left.matrix, right.matrix), validate=False)
        ledger = dict.fromkeys(LEDGER_KEYS, 0.0)
        probs = np.empty(schedule.n_steps)
        for k in range(schedule.n_steps):
            rho, p, step_ledger = _deterministic_step(rho, base, link, k, schedule)
            probs[k] = p
            for key in LEDGER_KEYS:
                ledger[key] += step_ledger[key]

        for side in (self._child_budget(level - 1, 2 * pos), self._child_budget(level - 1, 2 * pos + 1)):
            for key in LEDGER_KEYS:
                ledger[key] += side[key]

        self.nodes[(level, pos)] = _NodePlan(
            level=level,
            position=pos,
            first_site=first,
            last_site=last,
            p_steps=probs,
            state=rho,
            restart=restart_predictions(probs, schedule.n_steps),
            tau_hat=0.0,
            expected_builds=0.0,
            error_budget=ledger,
        )

    def _predict(self) -> None:
        # tau bottom-up: tau(node) = m + alpha * (tau(left) + tau(right))
        for level in range(1, self.n_levels + 1):
            for pos in range(self.model.n_sites // 2**level):
                node = self.nodes[(level, pos)]
                child_tau = 0.0
                if level > 1:
                    child_tau = (
                        self.nodes[(level - 1, 2 * pos)].tau_hat
                        + self.nodes[(level - 1, 2 * pos + 1)].tau_hat
                    )
                node.tau_hat = node.restart.m + node.restart.alpha * child_tau
        # expected build counts top-down: one initial build plus one rebuild
        # per failure of each build of the parent
        for level in range(self.n_levels, 0, -1):
            for pos in range(self.model.n_sites // 2**level):
                node = self.nodes[(level, pos)]
                if level == self.n_levels:
                    node.expected_builds = 1.0
                else:
                    parent = self.nodes[(level + 1, pos // 2)]
                    node.expected_builds = 1.0 + parent.restart.alpha * parent.expected_builds

    # -- views ----------------------------------------------------------

    @property
    def final_state(self) -> DensityMatrix:
        if self.n_levels == 0:
            return self._leaf_states[0]
        return self.nodes[(self.n_levels, 0)].state

    @property
    def error_budget(self) -> dict:
        if self.n_levels == 0:
            return dict.fromkeys(LEDGER_KEYS, 0.0)
        return dict(self.nodes[(self.n_levels, 0)].error_budget)

    def level_nodes(self, level: int) -> list:
        return [
            self.nodes[(level, pos)] for pos in range(self.model.n_sites // 2**level)
        ]

    def predicted_per_level(self) -> tuple[list, list, list]:
        """Per-level mean (m, alpha, tau) over the nodes of each level."""
        ms, alphas, taus = [], [], []
        for level in range(1, self.n_levels + 1):
            nodes = self.level_nodes(level)
            ms.append(float(np.mean([n.restart.m for n in nodes])))
            alphas.append(float(np.mean([n.restart.alpha for n in nodes])))
            taus.append(float(np.mean([n.tau_hat for n in nodes])))
        return ms, alphas, taus

    def predicted_total_steps(self) -> float:
        return float(
            sum(n.expected_builds * n.restart.m for n in self.nodes.values())
        )

    # -- runs -------------------------------------------------------------

    def _report(self, levels: list, total_steps: float, cost_mode: str, seed=None) -> CostReport:
        ms, alphas, taus = self.predicted_per_level()
        expected_steps = self.predicted_total_steps()
        st = self.schedule.step_time
        return CostReport(
            cost_mode=cost_mode,
            n_sites=self.model.n_sites,
            levels=levels,
            step_time_per_step=st,
            total_steps=total_steps,
            total_time=total_steps * st,
            predicted_m=ms,
            predicted_alpha=alphas,
            predicted_tau=taus,
            predicted_total_steps=expected_steps,
            predicted_total_time=expected_steps * st,
            error_budget=self.error_budget,
            seed=seed,
        )

    def expected_report(self) -> CostReport:
        """Single-pass accounting: every counter holds its expectation."""
        levels = []
        for level in range(1, self.n_levels + 1):
            nodes = self.level_nodes(level)
            builds = sum(n.expected_builds for n in nodes)
            steps = sum(n.expected_builds * n.restart.m for n in nodes)
            fails = sum(n.expected_builds * n.restart.alpha for n in nodes)
            levels.append(
                LevelStats(
                    level=level,
                    merge_attempts=fails + builds,
                    failures=fails,
                    steps_attempted=steps,
                    builds_completed=builds,
                )
            )
        total = sum(ls.steps_attempted for ls in levels)
        return self._report(levels, total, "single-pass")

    def sample_faithful(self, seed) -> CostReport:
        """Sample the restart tree literally and count everything.

        ``seed`` is an int or tuple of ints.  Each build of a node draws
        from its own stream keyed by (seed, level, position, build index),
        so the sampled process is independent of traversal order.
        """
        base = seed if isinstance(seed, tuple) else (int(seed),)
        levels = [LevelStats(level=k) for k in range(1, self.n_levels + 1)]
        build_counter: dict = {}
        sched_n = self.schedule.n_steps

        def build(level: int, pos: int) -> int:
            if level == 0:
                return 0
            idx = build_counter.get((level, pos), 0)
            build_counter[(level, pos)] = idx + 1
            rng = np.random.default_rng(np.random.SeedSequence(base + (level, pos, idx)))
            node = self.nodes[(level, pos)]
            stats = levels[level - 1]
            own = 0
            rebuild = 0
            while True:
                stats.merge_attempts += 1
                draws = rng.random(sched_n)
                failed = draws >= node.p_steps
                if failed.any():
                    steps = int(np.argmax(failed)) + 1
                    own += steps
                    stats.steps_attempted += steps
                    stats.failures += 1
                    rebuild += build(level - 1, 2 * pos) + build(level - 1, 2 * pos + 1)
                else:
                    own += sched_n
                    stats.steps_attempted += sched_n
                    stats.builds_completed += 1
                    stats.run_lengths.append(own)
                    tau = own + rebuild
                    stats.tau_samples.append(tau)
                    return tau

        for level in range(1, self.n_levels + 1):
            for pos in range(self.model.n_sites // 2**level):
                build(level, pos)

        total = sum(ls.steps_attempted for ls in levels)
        return self._report(levels, total, "faithful", seed=base)


def prepare_chain(
    model: ChainModel,
    beta: float,
    eps_bar: float | None = None,
    fidelity="ideal",
    rng=0,
    cost_mode: str = "single-pass",
    eps: float | None = None,
    max_dim: int = 1024,
    plan: MergePlan | None = None,
) -> tuple[DensityMatrix, CostReport]:
    """Thermalize a whole chain by recursive pairwise merging.

    Level-0 blocks are exact single-site Gibbs states; levels merge
    bottom-up with a uniform step size derived once from ``eps_bar``
    (or given explicitly as ``eps``).  ``rng`` seeds the faithful-mode
    sampling (int or tuple of ints); single-pass mode is deterministic.
    Returns the final state and the cost report for the chosen mode.
    """
    n = model.n_sites
    if n & (n - 1):
        raise ValueError(f"n_sites must be a power of two, got {n}")
    if model.hilbert_dim > max_dim:
        raise ResourceCapError(
            f"Hilbert dimension {model.hilbert_dim} exceeds the cap {max_dim}"
        )
    if cost_mode not in ("faithful", "single-pass"):
        raise ValueError(f"unknown cost mode {cost_mode!r}")
    if plan is None:
        h_norm = model.link_norm_bound
        if eps is not None:
            schedule = MergeSchedule.from_eps(eps, beta, h_norm, fidelity)
        elif eps_bar is not None:
            schedule = MergeSchedule.from_target_error(eps_bar, n, beta, h_norm, fidelity)
        else:
            raise ValueError("provide eps_bar or eps")
        plan = MergePlan(model, beta, schedule)
    if cost_mode == "faithful":
        report = plan.sample_faithful(rng)
    else:
        report = plan.expected_report()
    return plan.final_state, report


def sequence_error_budget(schedule: MergeSchedule, n_sites: int) -> float:
    """Predicted total trace-norm error N * eps * beta^2 ||h||^2 (constant 1)."""
    if n_sites < 1:
        raise ValueError(f"n_sites must be >= 1, got {n_sites}")
    return float(n_sites * schedule.eps * schedule.beta**2 * schedule.h_norm**2)
