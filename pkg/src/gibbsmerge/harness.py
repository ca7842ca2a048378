"""Config-driven experiment runner and canned validation suites.

``run_experiment`` consumes a YAML config (schema below), executes the
prepare-chain pipeline for the requested number of trials, and emits

* ``resolved_config.yaml`` — the config with every derived default filled in,
* ``trials.csv``          — one row per (trial, level), fixed column order,
* ``summary.json``        — aggregate statistics, schema-versioned.

Every number in the summary is copied from a CostReport field or from a
trace-distance computation; nothing is recomputed independently of the
per-trial data.  Identical config + seed produces byte-identical CSV.

Config schema (unknown keys are rejected)::

    model:
      name: ising | heisenberg | random
      n_sites: <int, power of two>
      local_dim: <int, random model only>
      coupling: <float>        field: <float, ising only>
      seed: <int>  site_scale: <float>  link_scale: <float>   (random only)
    beta: <float>
    eps_bar: <float>  |  eps: <float>     (exactly one)
    fidelity:
      mode: ideal | imperfect
      delta: <float|null>  zeta: <float|null>  eps_pe: <float|null>
      c: <float>  pe_time: <float|null>
    run:
      seed: <int>  trials: <int>  cost_mode: faithful | single-pass
      max_qubits: <int>
    output:
      directory: <path>
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .chains import (
    ChainModel,
    build_block_hamiltonian,
    heisenberg,
    random_chain,
    shift_psd,
    transverse_field_ising,
)
from .channels import (
    ChannelFidelity,
    dephase_gaussian,
    dephase_gaussian_quadrature,
    dephase_ideal,
)
from .costs import d_dim_prediction, restart_predictions, total_time_prediction
from .gibbs import dyson_imaginary_first_order, first_order_projector_form, gibbs_state
from .merge import (
    MergePlan,
    MergeSchedule,
    ResourceCapError,
    derived_fidelity,
    prepare_chain,
    sequence_error_budget,
)
from .operators import HermitianOperator, trace_distance, trace_norm

__all__ = [
    "ConfigError",
    "SCHEMA_VERSION",
    "CSV_COLUMNS",
    "SUITES",
    "load_config",
    "resolve_config",
    "run_experiment",
    "run_suite",
]

SCHEMA_VERSION = 1

CSV_COLUMNS = [
    "trial",
    "level",
    "merge_attempts",
    "steps_attempted",
    "failures",
    "builds_completed",
    "mean_run_length",
    "mean_tau",
    "time_charged",
]


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


# --------------------------------------------------------------------------
# config loading and validation
# --------------------------------------------------------------------------

_MODEL_KEYS = {"name", "n_sites", "local_dim", "coupling", "field", "seed",
               "site_scale", "link_scale"}
_FIDELITY_KEYS = {"mode", "delta", "zeta", "eps_pe", "c", "pe_time"}
_RUN_KEYS = {"seed", "trials", "cost_mode", "max_qubits"}
_OUTPUT_KEYS = {"directory"}
_TOP_KEYS = {"model", "beta", "eps_bar", "eps", "fidelity", "run", "output"}


def _reject_unknown(section: str, given: dict, allowed: set) -> None:
    unknown = set(given) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {section}: {sorted(unknown)}")


def _number(section: str, value, positive: bool = False) -> float:
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ConfigError(f"{section} must be a number, got {value!r}")
    if positive and value <= 0:
        raise ConfigError(f"{section} must be positive, got {value}")
    return float(value)


def load_config(path) -> dict:
    """Read and validate a YAML experiment config."""
    with open(path) as f:
        raw = yaml.safe_load(f)
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    return validate_config(raw)


def validate_config(raw: dict) -> dict:
    _reject_unknown("config", raw, _TOP_KEYS)
    if "model" not in raw or not isinstance(raw["model"], dict):
        raise ConfigError("config needs a 'model' mapping")
    model = dict(raw["model"])
    _reject_unknown("model", model, _MODEL_KEYS)
    name = model.get("name")
    if name not in ("ising", "heisenberg", "random"):
        raise ConfigError(f"model.name must be ising|heisenberg|random, got {name!r}")
    n = model.get("n_sites")
    if not isinstance(n, int) or n < 1 or (n & (n - 1)):
        raise ConfigError(f"model.n_sites must be a power-of-two integer, got {n!r}")

    if "beta" not in raw:
        raise ConfigError("config needs beta")
    _number("beta", raw["beta"], positive=True)

    has_eps = raw.get("eps") is not None
    has_bar = raw.get("eps_bar") is not None
    if has_eps == has_bar:
        raise ConfigError("give exactly one of eps / eps_bar")
    if has_eps:
        _number("eps", raw["eps"], positive=True)
    else:
        _number("eps_bar", raw["eps_bar"], positive=True)

    fidelity = dict(raw.get("fidelity") or {"mode": "ideal"})
    _reject_unknown("fidelity", fidelity, _FIDELITY_KEYS)
    mode = fidelity.setdefault("mode", "ideal")
    if mode not in ("ideal", "imperfect"):
        raise ConfigError(f"fidelity.mode must be ideal|imperfect, got {mode!r}")

    run = dict(raw.get("run") or {})
    _reject_unknown("run", run, _RUN_KEYS)
    run.setdefault("seed", 0)
    run.setdefault("trials", 1)
    run.setdefault("cost_mode", "single-pass")
    run.setdefault("max_qubits", 10)
    if not isinstance(run["seed"], int):
        raise ConfigError("run.seed must be an integer")
    if not isinstance(run["trials"], int) or run["trials"] < 1:
        raise ConfigError(f"run.trials must be a positive integer, got {run['trials']!r}")
    if run["cost_mode"] not in ("faithful", "single-pass"):
        raise ConfigError(f"run.cost_mode must be faithful|single-pass")
    if not isinstance(run["max_qubits"], int) or run["max_qubits"] < 1:
        raise ConfigError("run.max_qubits must be a positive integer")

    output = dict(raw.get("output") or {})
    _reject_unknown("output", output, _OUTPUT_KEYS)
    output.setdefault("directory", "out")

    cfg = dict(raw)
    cfg["model"] = model
    cfg["fidelity"] = fidelity
    cfg["run"] = run
    cfg["output"] = output
    return cfg


def _build_model(model_cfg: dict) -> ChainModel:
    name = model_cfg["name"]
    n = model_cfg["n_sites"]
    if name == "ising":
        return transverse_field_ising(
            n, coupling=model_cfg.get("coupling", 1.0), field=model_cfg.get("field", 1.0)
        )
    if name == "heisenberg":
        return heisenberg(n, coupling=model_cfg.get("coupling", 1.0))
    return random_chain(
        n,
        local_dim=model_cfg.get("local_dim", 2),
        seed=model_cfg.get("seed", 0),
        site_scale=model_cfg.get("site_scale", 1.0),
        link_scale=model_cfg.get("link_scale", 1.0),
    )


def resolve_config(cfg: dict) -> tuple[dict, ChainModel, MergeSchedule]:
    """Fill in every derived default and return the runnable objects."""
    model = _build_model(cfg["model"])
    beta = float(cfg["beta"])
    h_norm = model.link_norm_bound

    fid_cfg = cfg["fidelity"]
    if cfg.get("eps") is not None:
        eps = float(cfg["eps"])
    else:
        eps = (
            float(cfg["eps_bar"]) / (model.n_sites * beta * beta * h_norm * h_norm)
            if h_norm > 0
            else 1.0
        )
        eps = min(eps, 1.0)
    if fid_cfg["mode"] == "imperfect" and h_norm > 0:
        fidelity = derived_fidelity(
            eps,
            beta,
            h_norm,
            c=float(fid_cfg.get("c") or 1.0),
            delta=fid_cfg.get("delta"),
            zeta=fid_cfg.get("zeta"),
            eps_pe=fid_cfg.get("eps_pe"),
            pe_time=fid_cfg.get("pe_time"),
        )
    else:
        fidelity = ChannelFidelity.ideal()
    schedule = MergeSchedule.from_eps(eps, beta, h_norm, fidelity)

    resolved = {
        "schema_version": SCHEMA_VERSION,
        "model": dict(cfg["model"]),
        "beta": beta,
        "eps_bar": cfg.get("eps_bar"),
        "eps": schedule.eps,
        "n_steps": schedule.n_steps,
        "link_norm_bound": h_norm,
        "fidelity": {
            "mode": schedule.fidelity.mode,
            "delta": schedule.fidelity.delta,
            "zeta": schedule.fidelity.zeta,
            "eps_pe": schedule.fidelity.eps_pe,
            "c": schedule.fidelity.c,
            "pe_time": schedule.fidelity.pe_time,
        },
        "run": dict(cfg["run"]),
        "output": dict(cfg["output"]),
    }
    return resolved, model, schedule


# --------------------------------------------------------------------------
# experiment execution
# --------------------------------------------------------------------------


def _fmt(x) -> str:
    """Shortest-roundtrip, deterministic text form for CSV cells."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


@dataclass
class ExperimentResult:
    out_dir: Path
    summary: dict
    csv_path: Path
    summary_path: Path
    config_path: Path


def run_experiment(config, out_dir=None, **overrides) -> ExperimentResult:
    """Run a config end to end and write the three artifacts.

    ``config`` is a path or an already-loaded dict; ``overrides`` may set
    seed, trials, cost_mode, max_qubits.
    """
    cfg = load_config(config) if not isinstance(config, dict) else validate_config(config)
    for key in ("seed", "trials", "cost_mode", "max_qubits"):
        if overrides.get(key) is not None:
            cfg["run"][key] = overrides[key]
    if out_dir is not None:
        cfg["output"]["directory"] = str(out_dir)

    resolved, model, schedule = resolve_config(cfg)
    run_cfg = cfg["run"]
    cap = 2 ** run_cfg["max_qubits"]
    if model.hilbert_dim > cap:
        raise ResourceCapError(
            f"Hilbert dimension {model.hilbert_dim} exceeds 2^{run_cfg['max_qubits']}"
        )

    out = Path(cfg["output"]["directory"])
    out.mkdir(parents=True, exist_ok=True)

    plan = MergePlan(model, float(cfg["beta"]), schedule)
    target = gibbs_state(build_block_hamiltonian(model, 0, model.n_sites - 1), float(cfg["beta"]))
    final_distance = trace_distance(plan.final_state, target)

    reports = []
    for trial in range(run_cfg["trials"]):
        if run_cfg["cost_mode"] == "faithful":
            reports.append(plan.sample_faithful((run_cfg["seed"], trial)))
        else:
            reports.append(plan.expected_report())

    config_path = out / "resolved_config.yaml"
    with open(config_path, "w") as f:
        yaml.safe_dump(resolved, f, sort_keys=True)

    csv_path = out / "trials.csv"
    with open(csv_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(CSV_COLUMNS)
        for trial, report in enumerate(reports):
            for ls in report.levels:
                writer.writerow(
                    [
                        trial,
                        ls.level,
                        _fmt(ls.merge_attempts),
                        _fmt(ls.steps_attempted),
                        _fmt(ls.failures),
                        _fmt(ls.builds_completed),
                        _fmt(ls.mean_run_length()),
                        _fmt(ls.mean_tau()),
                        _fmt(ls.steps_attempted * report.step_time_per_step),
                    ]
                )

    summary = _summarize(reports, plan, schedule, resolved, final_distance)
    summary_path = out / "summary.json"
    with open(summary_path, "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")

    return ExperimentResult(out, summary, csv_path, summary_path, config_path)


def _nanmean(values) -> float:
    vals = [v for v in values if np.isfinite(v)]
    return float(np.mean(vals)) if vals else float("nan")


def _summarize(reports, plan, schedule, resolved, final_distance) -> dict:
    n_levels = plan.n_levels
    emp_m, emp_alpha, emp_tau = [], [], []
    for k in range(n_levels):
        runs = [x for r in reports for x in r.levels[k].run_lengths]
        taus = [x for r in reports for x in r.levels[k].tau_samples]
        fails = sum(r.levels[k].failures for r in reports)
        builds = sum(r.levels[k].builds_completed for r in reports)
        emp_m.append(float(np.mean(runs)) if runs else _nanmean(
            [r.levels[k].mean_run_length() for r in reports]))
        emp_tau.append(float(np.mean(taus)) if taus else _nanmean(
            [r.levels[k].mean_tau() for r in reports]))
        emp_alpha.append(fails / builds if builds else float("nan"))

    ref = reports[0]
    summary = {
        "schema_version": SCHEMA_VERSION,
        "resolved_config": resolved,
        "n_trials": len(reports),
        "cost_mode": ref.cost_mode,
        "final_trace_distance": final_distance,
        "sequence_error_budget": sequence_error_budget(schedule, plan.model.n_sites),
        "error_budget": ref.error_budget,
        "predicted": {
            "m": ref.predicted_m,
            "alpha": ref.predicted_alpha,
            "tau": ref.predicted_tau,
            "total_steps": ref.predicted_total_steps,
            "total_time": ref.predicted_total_time,
        },
        "empirical": {
            "m": emp_m,
            "alpha": emp_alpha,
            "tau": emp_tau,
            "mean_total_steps": float(np.mean([r.total_steps for r in reports])),
            "mean_total_time": float(np.mean([r.total_time for r in reports])),
        },
    }
    pred = summary["predicted"]
    emp = summary["empirical"]
    summary["ratios"] = {
        "m": [e / p if p else float("nan") for e, p in zip(emp["m"], pred["m"])],
        "alpha": [e / p if p else float("nan") for e, p in zip(emp["alpha"], pred["alpha"])],
        "tau": [e / p if p else float("nan") for e, p in zip(emp["tau"], pred["tau"])],
        "total_time": (
            emp["mean_total_time"] / pred["total_time"] if pred["total_time"] else float("nan")
        ),
    }
    return _jsonable(summary)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


# --------------------------------------------------------------------------
# canned suites
# --------------------------------------------------------------------------


def _write_suite(out_dir, name, rows, header, summary) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{name}.csv"
    with open(csv_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(x) if isinstance(x, (int, float, np.floating)) else x for x in row])
    json_path = out / f"{name}_summary.json"
    with open(json_path, "w") as f:
        json.dump(_jsonable(summary), f, indent=2, sort_keys=True)
        f.write("\n")
    return csv_path, json_path


def _loglog_slope(xs, ys) -> float:
    return float(np.polyfit(np.log(np.asarray(xs)), np.log(np.asarray(ys)), 1)[0])


def _suite_scaling_eps(out_dir, seed):
    """Second-order scaling of the per-step error on a 2-qubit merge."""
    model = transverse_field_ising(2)
    beta = 1.0
    h_norm = model.link_norm_bound
    left = gibbs_state(HermitianOperator(model.site_terms[0]), beta)
    right = gibbs_state(HermitianOperator(model.site_terms[1]), beta)
    base = HermitianOperator(
        np.kron(model.site_terms[0], np.eye(2)) + np.kron(np.eye(2), model.site_terms[1])
    )
    link, _ = shift_psd(model.link_terms[0])
    rho0 = np.kron(left.matrix, right.matrix)

    from .merge import _deterministic_step  # suite shares the channel path
    from .operators import DensityMatrix

    rows = []
    eps_values = [0.04, 0.02, 0.01]
    errors = []
    for eps in eps_values:
        schedule = MergeSchedule.from_eps(eps, beta, h_norm, "ideal")
        state, _p, _ledger = _deterministic_step(
            DensityMatrix(rho0, validate=False), base, link, 0, schedule
        )
        target = gibbs_state(
            HermitianOperator(base.matrix + schedule.coupling_grid[1] * link.matrix), beta
        )
        err = trace_distance(state, target)
        errors.append(err)
        rows.append((eps, err))
    slope = _loglog_slope(eps_values, errors)
    summary = {
        "suite": "scaling-eps",
        "slope": slope,
        "pass": bool(1.8 <= slope <= 2.2),
        "criteria": {"slope_in_[1.8,2.2]": bool(1.8 <= slope <= 2.2)},
    }
    return rows, ["eps", "step_error"], summary


def _suite_dephasing_sigma(out_dir, seed):
    """Convergence of Gaussian dephasing to the ideal projector sum."""
    rng = np.random.default_rng(seed)
    g_mat = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    basis = HermitianOperator(0.5 * (g_mat + g_mat.conj().T))
    a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    rho = a @ a.conj().T
    rho /= np.trace(rho).real
    gaps = np.diff(basis.eigenvalues)
    min_gap = float(gaps.min())
    ideal = dephase_ideal(rho, basis)

    rows = []
    distances = []
    for sigma_gap in (10.0, 100.0, 1000.0):
        fid = ChannelFidelity.imperfect(delta=1.0, zeta=1.0 / (sigma_gap / min_gap), eps_pe=0.0)
        dist = trace_distance(dephase_gaussian(rho, basis, fid), ideal)
        distances.append(dist)
        rows.append((sigma_gap, dist))
    fid_quad = ChannelFidelity.imperfect(
        delta=1.0, zeta=1.0 / (2.0 / min_gap), eps_pe=0.0, quadrature_nodes=8001
    )
    quad_diff = trace_norm(
        dephase_gaussian_quadrature(rho, basis, fid_quad).matrix
        - dephase_gaussian(rho, basis, fid_quad).matrix
    )
    monotone = all(b <= a + 1e-15 for a, b in zip(distances, distances[1:]))
    summary = {
        "suite": "dephasing-sigma",
        "distances": distances,
        "quadrature_residual": quad_diff,
        "pass": bool(monotone and distances[-1] < 1e-6 and quad_diff < 1e-7),
        "criteria": {
            "monotone_nonincreasing": bool(monotone),
            "smallest_below_1e-6": bool(distances[-1] < 1e-6),
            "quadrature_matches_1e-7": bool(quad_diff < 1e-7),
        },
    }
    return rows, ["sigma_times_gap", "distance_to_ideal"], summary


def _suite_restart_stats(out_dir, seed):
    """Markov solver vs Monte Carlo, and the level recursion on N = 8."""
    p, n = 0.9, 10
    stats = restart_predictions(p, n)
    trials = 10**6
    rng = np.random.default_rng(seed)
    run = np.zeros(trials, dtype=np.int64)
    steps = np.zeros(trials, dtype=np.int64)
    active = np.ones(trials, dtype=bool)
    while active.any():
        idx = np.flatnonzero(active)
        success = rng.random(idx.size) < p
        steps[idx] += 1
        run[idx] = np.where(success, run[idx] + 1, 0)
        active[idx] = run[idx] < n
    mc_m = float(steps.mean())
    mc_se = float(steps.std(ddof=1) / np.sqrt(trials))

    model = transverse_field_ising(8)
    plan = MergePlan(model, 1.0, MergeSchedule.from_eps(0.05, 1.0, model.link_norm_bound, "ideal"))
    faithful_trials = 1000
    reports = [plan.sample_faithful((seed, t)) for t in range(faithful_trials)]
    rows = [("markov_vs_mc", 0, stats.m, mc_m, mc_se)]
    level_pass = []
    _, _, pred_tau = plan.predicted_per_level()
    for k in range(1, plan.n_levels + 1):
        taus = [x for r in reports for x in r.levels[k - 1].tau_samples]
        emp = float(np.mean(taus))
        se = float(np.std(taus, ddof=1) / np.sqrt(len(taus)))
        rows.append(("tau_level", k, pred_tau[k - 1], emp, se))
        level_pass.append(abs(emp - pred_tau[k - 1]) <= 3 * se)
    m_pass = abs(stats.m - mc_m) <= 3 * mc_se
    summary = {
        "suite": "restart-stats",
        "markov_m": stats.m,
        "mc_m": mc_m,
        "mc_se": mc_se,
        "pass": bool(m_pass and all(level_pass)),
        "criteria": {
            "m_within_3se": bool(m_pass),
            "tau_within_3se_per_level": [bool(x) for x in level_pass],
        },
    }
    return rows, ["check", "level", "predicted", "empirical", "std_error"], summary


def _suite_dyson_identity(out_dir, seed):
    """Projector-form versus closed-form first-order coefficients."""
    rows = []
    worst = 0.0
    for i in range(25):
        rng = np.random.default_rng(seed + i)
        dim = int(rng.choice([4, 8, 12, 16]))
        h_mat = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
        hop = HermitianOperator(0.5 * (h_mat + h_mat.conj().T))
        v_mat = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
        pert = 0.5 * (v_mat + v_mat.conj().T)
        beta = float(rng.uniform(0.5, 2.0))
        residual = trace_norm(
            first_order_projector_form(hop, pert, beta)
            - dyson_imaginary_first_order(hop, pert, beta)
        )
        worst = max(worst, residual)
        rows.append((seed + i, dim, beta, residual))
    summary = {
        "suite": "dyson-identity",
        "max_residual": worst,
        "pass": bool(worst < 1e-8),
        "criteria": {"max_residual_below_1e-8": bool(worst < 1e-8)},
    }
    return rows, ["seed", "dim", "beta", "residual"], summary


def _suite_d_dim_predict(out_dir, seed):
    """Dominant-term cost predictors across spatial dimensions."""
    n_sites, beta, h_norm, eps_bar = 4, 1.0, 1.0, 0.1
    rows = []
    values = []
    for dim in (1, 2, 3):
        val = d_dim_prediction(n_sites, dim, beta, h_norm, eps_bar)
        values.append(val)
        rows.append((dim, val))
    one_d = total_time_prediction(n_sites, beta, h_norm, eps_bar)
    rows.append((0, one_d))  # dimension 0 row = the 1D N^(beta h) convention
    monotone = values[0] < values[1] < values[2]
    summary = {
        "suite": "d-dim-predict",
        "predictions": dict(zip(["D1", "D2", "D3"], values)),
        "one_d_power_law": one_d,
        "pass": bool(monotone),
        "criteria": {"monotone_in_dimension": bool(monotone)},
    }
    return rows, ["dimension", "predicted_time"], summary


SUITES = {
    "scaling-eps": _suite_scaling_eps,
    "dephasing-sigma": _suite_dephasing_sigma,
    "restart-stats": _suite_restart_stats,
    "dyson-identity": _suite_dyson_identity,
    "d-dim-predict": _suite_d_dim_predict,
}


@dataclass
class SuiteResult:
    name: str
    passed: bool
    summary: dict
    csv_path: Path
    summary_path: Path


def run_suite(name: str, out_dir="out", seed: int = 0) -> SuiteResult:
    """Run a canned validation suite; writes one CSV and one JSON summary."""
    if name not in SUITES:
        raise ConfigError(f"unknown suite {name!r}; available: {sorted(SUITES)}")
    rows, header, summary = SUITES[name](out_dir, seed)
    csv_path, json_path = _write_suite(out_dir, name.replace("-", "_"), rows, header, summary)
    return SuiteResult(name, bool(summary["pass"]), summary, csv_path, json_path)
