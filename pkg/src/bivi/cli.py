"""Experiment harness: presets, run orchestration, CSV/JSON serialization,
comparison sweeps and post-hoc verification of the bound certificates.

Per-iteration series go to ``records.csv`` (17 significant digits, so reruns
are byte-identical and re-verification is bit-faithful), run metadata to
``summary.json`` and the resolved configuration echo to ``config.json``.
Exit codes: 0 success, 2 invariant/dominance violation, 3 divergence,
4 configuration error.

records.csv column contract (per recorded iteration k; blank = not
applicable at that row):

  run_id, k                      identity
  step_norm ... Lambda           schedule scalars and running sums
  D                              ||ybar_k - ybar_{k-1}|| (defined for k >= 2)
  err_known                      ||x_k - x*|| when a solution is known
  surrogate, phi, gap_fx         measured quantities (gap_fx stride-sampled)
  bound_*                        closed-form certificates for the run's mode
  inv_prop1, inv_lemma2,         worst inequality margins since the previous
  inv_corstr                     row (prop1/corstr >= -1e-7, lemma2 <= 1e-9)
  beta, p, q, sum_pdelta,        strong mode only (q = p_{k-1} alpha_k)
  Lambda_w, Lambda_w_log10
  x_i, ybar_i, ybarw_i           iterate / ergodic mean components, last

compare.csv: column ``k`` plus ``<variant>/D``, ``<variant>/phi``,
``<variant>/err`` per sweep variant, aligned on recorded k.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import diagnostics as diag
from .core import BilevelProblem, load_problem
from .geometry import Box, NonnegOrthant, Polyhedron
from .problems import load_network, make_example1, make_example2, make_example3
from .schedule import (AdaptivePen, ConstantAlpha, ConstantEta,
                       ConstantLambda, DiminishingEta, IntervalLambda,
                       ScheduleConfig, ScheduleError, SummableTail, ZeroAlpha,
                       eta_at, lambda_range)
from .solver import StoppingRule, run

__all__ = ["preset_config", "grid_preset", "run_experiment", "sweep",
           "verify_records", "main"]

EXIT_OK = 0
EXIT_INVARIANT = 2
EXIT_DIVERGED = 3
EXIT_CONFIG = 4


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# presets

def preset_config(name: str) -> dict:
    """The experiment setups from the source benchmarks, verbatim."""
    if name == "example1":
        return {
            "run_id": "example1",
            "problem": {"kind": "example1"},
            "x0": [40.0, 40.0],
            "schedule": {
                "eta": {"rule": "constant", "value": 0.1},
                "alpha": {"rule": "constant", "value": 0.5},
                "lambda": {"rule": "constant", "value": 1.0},
                "strong_mode": False,
                "enforce_stepsize": True,
            },
            "stop": {"max_iters": 5000, "tol_known_solution": 1e-6},
            "check_level": "sampled",
            "check_samples": 20,
            "record_stride": 1,
            "gap_stride": 1,
            "seed": 0,
        }
    if name == "example2":
        return {
            "run_id": "example2",
            "problem": {"kind": "example2", "m": 100, "seed": 0},
            "x0": "ones",
            "schedule": {
                "eta": {"rule": "constant", "value": 0.1},
                "alpha": {"rule": "constant", "value": 0.1},
                "lambda": {"rule": "inverse_lipschitz_F"},
                "strong_mode": False,
                "enforce_stepsize": False,
            },
            "stop": {"max_iters": 2000},
            "check_level": "sampled",
            "check_samples": 20,
            "record_stride": 1,
            "gap_stride": 0,
            "seed": 0,
        }
    if name == "example3":
        return {
            "run_id": "example3",
            "problem": {"kind": "example3"},
            "x0": "ones",
            "schedule": {
                "eta": {"rule": "constant", "value": 0.1},
                "alpha": {"rule": "constant", "value": 0.5},
                "lambda": {"rule": "constant", "value": 0.1},
                "strong_mode": False,
                "enforce_stepsize": True,
            },
            "stop": {"max_iters": 5000},
            "check_level": "sampled",
            "check_samples": 20,
            "record_stride": 1,
            "gap_stride": 0,
            "seed": 0,
        }
    raise ConfigError(f"unknown preset {name!r}")


def grid_preset(name: str) -> dict:
    """Variant grids mirroring the benchmark comparison figures."""
    def eta_variants():
        return [("eta-const", {"eta": {"rule": "constant", "value": 0.1}}),
                ("eta-dim", {"eta": {"rule": "diminishing", "eta0": 0.1, "b": 0.5}})]

    if name == "example1":
        alphas = [("alpha-const", {"alpha": {"rule": "constant", "value": 0.5}}),
                  ("alpha-pen", {"alpha": {"rule": "adaptive_pen", "m": 1,
                                           "theta": 0.1, "rho": 1e-4, "alpha0": 0.5}})]
    elif name in ("example2", "example3"):
        a0 = 0.1 if name == "example2" else 0.5
        alphas = [("alpha-zero", {"alpha": {"rule": "zero"}}),
                  ("alpha-const", {"alpha": {"rule": "constant", "value": a0}}),
                  ("alpha-pen", {"alpha": {"rule": "adaptive_pen", "m": 1,
                                           "theta": 0.99, "rho": 1e-8, "alpha0": a0}})]
    else:
        raise ConfigError(f"unknown grid preset {name!r}")
    variants = []
    for ename, eover in eta_variants():
        for aname, aover in alphas:
            variants.append({"name": f"{ename}_{aname}",
                             "overrides": {"schedule": {**eover, **aover}}})
    return {"variants": variants}


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


# ---------------------------------------------------------------------------
# config -> objects

def build_problem(spec: dict) -> BilevelProblem:
    kind = spec.get("kind")
    if kind == "example1":
        return make_example1()
    if kind == "example2":
        return make_example2(m=spec.get("m", 100), seed=spec.get("seed", 0),
                             estimate=spec.get("estimate_constants", False))
    if kind == "example3":
        path = spec.get("network_path")
        net = load_network(path) if path else load_network()
        if "n_a" in spec and spec["n_a"] is not None:
            net.power = np.full(net.n_arcs, float(spec["n_a"]))
        return make_example3(net)
    if kind == "file":
        return load_problem(spec["path"])
    raise ConfigError(f"unknown problem kind {kind!r}")


def _eta_rule(spec: dict):
    rule = spec.get("rule")
    if rule == "constant":
        return ConstantEta(spec["value"])
    if rule == "diminishing":
        return DiminishingEta(spec["eta0"], spec["b"])
    raise ConfigError(f"unknown eta rule {rule!r}")


def _alpha_rule(spec: dict):
    rule = spec.get("rule")
    if rule == "zero":
        return ZeroAlpha()
    if rule == "constant":
        return ConstantAlpha(spec["value"])
    if rule == "adaptive_pen":
        return AdaptivePen(spec.get("m", 0), spec["theta"], spec["rho"],
                           spec.get("alpha0", 0.5))
    if rule == "summable_tail":
        xi = spec["xi"]
        return SummableTail(spec.get("m", 0), xi["kind"], xi["xi0"], xi["param"])
    raise ConfigError(f"unknown alpha rule {rule!r}")


def _lambda_rule(spec: dict | None, problem: BilevelProblem):
    if spec is None:
        return None
    rule = spec.get("rule")
    if rule == "constant":
        return ConstantLambda(spec["value"])
    if rule == "interval":
        return IntervalLambda(spec["lo"], spec["hi"])
    if rule == "inverse_lipschitz_F":
        return ConstantLambda(1.0 / problem.F.lipschitz_constant)
    raise ConfigError(f"unknown lambda rule {rule!r}")


def build_schedule(spec: dict, problem: BilevelProblem) -> ScheduleConfig:
    try:
        return ScheduleConfig(
            eta_rule=_eta_rule(spec["eta"]),
            alpha_rule=_alpha_rule(spec["alpha"]),
            lambda_rule=_lambda_rule(spec.get("lambda"), problem),
            strong_mode=spec.get("strong_mode", False),
            enforce_stepsize=spec.get("enforce_stepsize", True),
        )
    except (KeyError, ScheduleError) as exc:
        raise ConfigError(f"invalid schedule: {exc}") from exc


def build_stop(spec: dict) -> StoppingRule:
    try:
        return StoppingRule(max_iters=spec.get("max_iters"),
                            tol_step=spec.get("tol_step"),
                            tol_ergodic=spec.get("tol_ergodic"),
                            tol_known_solution=spec.get("tol_known_solution"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _resolve_x0(spec, problem: BilevelProblem) -> np.ndarray:
    if spec is None or spec == "ones":
        return np.ones(problem.dim)
    if spec == "zeros":
        return np.zeros(problem.dim)
    x0 = np.asarray(spec, dtype=float)
    if x0.shape != (problem.dim,):
        raise ConfigError(f"x0 has dimension {x0.size}, problem needs {problem.dim}")
    return x0


# ---------------------------------------------------------------------------
# per-row diagnostics

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return format(v, ".17g")
    return str(v)


def _phi_applicable(problem: BilevelProblem) -> bool:
    X = problem.X
    return isinstance(X, NonnegOrthant) or (isinstance(X, Polyhedron) and X.nonneg)


def _gap_available(problem: BilevelProblem) -> bool:
    if problem.F.kind != "affine":
        return False
    A = problem.F.matrix
    if float(np.linalg.eigvalsh(A + A.T)[0]) < -1e-9:
        return False
    return isinstance(problem.X, (Box, Polyhedron))


class _BoundSet:
    """Bound columns applicable to one run, with skip reasons recorded."""

    def __init__(self, problem: BilevelProblem, schedule: ScheduleConfig,
                 eta_constant: bool):
        self.problem = problem
        self.schedule = schedule
        self.skipped: dict[str, str] = {}
        self.columns: list[str] = []
        self.lam_lo, self.lam_hi = lambda_range(schedule.lambda_rule)
        self.DX = problem.diameter_DX
        self.CH = problem.C_H
        self.strong = schedule.strong_mode
        self.eta_constant = eta_constant
        self.beta = None
        have_dx = self.DX is not None and math.isfinite(self.DX)
        have_ch = self.CH is not None and math.isfinite(self.CH)
        if not have_dx:
            self.skipped["all"] = ("diameter of X unavailable or unbounded; "
                                   "the compactness-based bounds do not apply")
            return
        # the monotone-mode bounds certify the plain ergodic mean; a strong
        # run measures at the product-weighted mean, so they are not paired
        dim = isinstance(schedule.eta_rule, DiminishingEta) and not self.strong
        if dim:
            self.columns.append("bound_opt_dim")
            if have_ch:
                self.columns.append("bound_feas_dim")
            else:
                self.skipped["bound_feas_dim"] = "C_H unavailable"
        if eta_constant and not self.strong:
            self.columns.append("bound_opt_const")
            if have_ch:
                self.columns.append("bound_feas_const")
            else:
                self.skipped["bound_feas_const"] = "C_H unavailable"
        if self.strong:
            mu = problem.H.strong_monotonicity_mu
            if not eta_constant:
                self.skipped["strong"] = "strong closed-form bounds need constant eta"
            else:
                eta = eta_at(schedule.eta_rule, 0)
                L = problem.F.lipschitz_constant + eta * problem.H.lipschitz_constant
                try:
                    self.beta = diag.strong_beta(lam_lo=self.lam_lo, lam_hi=self.lam_hi,
                                                 eta=eta, mu=mu, L=L)
                    self.columns += ["bound_opt_strong", "bound_opt_strong_closed"]
                    if isinstance(schedule.alpha_rule, ZeroAlpha):
                        self.columns.append("bound_opt_strong_noinertia")
                    if have_ch:
                        self.columns += ["bound_feas_strong", "bound_feas_strong_closed"]
                    else:
                        self.skipped["bound_feas_strong"] = "C_H unavailable"
                except diag.DiagnosticsError as exc:
                    self.skipped["strong"] = str(exc)
        if (self.problem.sharpness is not None and self.problem.B_H is not None
                and math.isfinite(self.problem.B_H)):
            if "bound_feas_dim" in self.columns:
                self.columns.append("bound_weak_sharp_dim")
            if "bound_feas_const" in self.columns:
                self.columns.append("bound_weak_sharp_const")

    def evaluate(self, rec: dict) -> dict:
        k = rec["k"]
        out = {}
        eta0 = eta_at(self.schedule.eta_rule, 0)
        for name in self.columns:
            if name == "bound_opt_dim":
                out[name] = diag.bound_optimality_diminishing(
                    k, DX=self.DX, lam_lo=self.lam_lo,
                    eta0=self.schedule.eta_rule.eta0, b=self.schedule.eta_rule.b,
                    s=rec["s_partial"])
            elif name == "bound_feas_dim":
                out[name] = diag.bound_feasibility_diminishing(
                    k, DX=self.DX, lam_lo=self.lam_lo, lam_hi=self.lam_hi,
                    eta0=self.schedule.eta_rule.eta0, b=self.schedule.eta_rule.b,
                    s=rec["s_partial"], CH=self.CH)
            elif name == "bound_opt_const":
                out[name] = diag.bound_optimality_constant(
                    k, DX=self.DX, lam_lo=self.lam_lo, eta=eta0,
                    shat=rec["shat_partial"])
            elif name == "bound_feas_const":
                out[name] = diag.bound_feasibility_constant(
                    k, DX=self.DX, lam_lo=self.lam_lo, lam_hi=self.lam_hi,
                    eta=eta0, shat=rec["shat_partial"], CH=self.CH)
            elif name == "bound_opt_strong":
                out[name] = diag.strong_bound_optimality(
                    k, DX=self.DX, lam_lo=self.lam_lo, eta=eta0, beta=self.beta,
                    sum_pdelta=rec["sum_pdelta"], form="general")
            elif name == "bound_opt_strong_closed":
                out[name] = diag.strong_bound_optimality(
                    k, DX=self.DX, lam_lo=self.lam_lo, eta=eta0, beta=self.beta,
                    form="closed")
            elif name == "bound_opt_strong_noinertia":
                out[name] = diag.strong_bound_optimality(
                    k, DX=self.DX, lam_lo=self.lam_lo, eta=eta0, beta=self.beta,
                    form="no-inertia")
            elif name == "bound_feas_strong":
                out[name] = diag.strong_bound_feasibility(
                    k, DX=self.DX, CH=self.CH, lam_lo=self.lam_lo, lam_hi=self.lam_hi,
                    eta=eta0, beta=self.beta, sum_pdelta=rec["sum_pdelta"],
                    form="general")
            elif name == "bound_feas_strong_closed":
                out[name] = diag.strong_bound_feasibility(
                    k, DX=self.DX, CH=self.CH, lam_lo=self.lam_lo, lam_hi=self.lam_hi,
                    eta=eta0, beta=self.beta, form="closed")
            elif name == "bound_weak_sharp_dim":
                sigma, order = self.problem.sharpness
                out[name] = diag.weak_sharp_lower_bound(
                    out["bound_feas_dim"], self.problem.B_H, sigma, order)
            elif name == "bound_weak_sharp_const":
                sigma, order = self.problem.sharpness
                out[name] = diag.weak_sharp_lower_bound(
                    out["bound_feas_const"], self.problem.B_H, sigma, order)
        return out


# measured column -> bound columns it must stay below (within DOMINANCE_TOL)
DOMINANCE_PAIRS = {
    "gap_fx": ["bound_feas_dim", "bound_feas_const", "bound_feas_strong",
               "bound_feas_strong_closed"],
    "surrogate": ["bound_opt_dim", "bound_opt_const", "bound_opt_strong",
                  "bound_opt_strong_closed", "bound_opt_strong_noinertia"],
}


def run_experiment(config: dict, out_dir) -> dict:
    """Execute one configured run and write records/summary/config files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    problem = build_problem(config.get("problem", {}))
    schedule = build_schedule(config.get("schedule", {}), problem)
    schedule, admissible = schedule.resolved(
        L_F=problem.F.lipschitz_constant, L_H=problem.H.lipschitz_constant,
        mu=problem.H.strong_monotonicity_mu)
    stop = build_stop(config.get("stop", {}))
    x0 = _resolve_x0(config.get("x0"), problem)
    run_id = config.get("run_id", "run")

    result = run(problem, schedule, stop, x0=x0,
                 check_level=config.get("check_level", "off"),
                 check_samples=config.get("check_samples", 20),
                 seed=config.get("seed", 0),
                 record_stride=config.get("record_stride", 1))

    eta_constant = isinstance(schedule.eta_rule, ConstantEta)
    bounds = _BoundSet(problem, schedule, eta_constant)
    phi_on = _phi_applicable(problem)
    gap_stride = config.get("gap_stride", 0)
    gap_on = gap_stride > 0 and _gap_available(problem)
    surrogate_on = problem.known_solution is not None
    strong = schedule.strong_mode

    dominance_violations = 0
    rows = []
    for idx, rec in enumerate(result.records):
        row = dict(rec)
        ybar_measured = rec["ybar_w"] if strong else rec["ybar"]
        if surrogate_on and ybar_measured is not None:
            row["surrogate"] = diag.gap_HQ_surrogate(ybar_measured, problem)
        if phi_on and rec["ybar"] is not None:
            row["phi"] = diag.infeasibility_phi(rec["ybar"], problem.F)
        if gap_on and ybar_measured is not None and (
                idx % gap_stride == 0 or idx == len(result.records) - 1):
            row["gap_fx"] = diag.gap_FX(ybar_measured, problem)
        row.update(bounds.evaluate(rec))
        for measured, targets in DOMINANCE_PAIRS.items():
            if measured not in row:
                continue
            for target in targets:
                if target in row and row[measured] > row[target] + diag.DOMINANCE_TOL:
                    dominance_violations += 1
        if "gap_fx" in row and row["gap_fx"] < -1e-9:
            dominance_violations += 1
        rows.append(row)

    scalar_cols = ["step_norm", "alpha", "eta", "lam", "delta", "s_partial",
                   "shat_partial", "Lambda", "D", "err_known"]
    if strong:
        scalar_cols += ["beta", "p", "q", "sum_pdelta", "Lambda_w", "Lambda_w_log10"]
    measured_cols = []
    if surrogate_on:
        measured_cols.append("surrogate")
    if phi_on:
        measured_cols.append("phi")
    if gap_on:
        measured_cols.append("gap_fx")
    check_cols = []
    if config.get("check_level", "off") != "off":
        check_cols = ["inv_prop1", "inv_lemma2"] + (["inv_corstr"] if strong else [])
    n = problem.dim
    vec_cols = [f"x_{i}" for i in range(n)] + [f"ybar_{i}" for i in range(n)]
    if strong:
        vec_cols += [f"ybarw_{i}" for i in range(n)]
    header = (["run_id", "k"] + scalar_cols + measured_cols + bounds.columns
              + check_cols + vec_cols)

    records_path = out / "records.csv"
    with open(records_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            cells = [run_id, row["k"]]
            cells += [_fmt(row.get(c)) for c in scalar_cols + measured_cols
                      + bounds.columns + check_cols]
            x = row["x"]
            yb = row["ybar"] if row["ybar"] is not None else [None] * n
            cells += [_fmt(float(v)) for v in x]
            cells += [_fmt(None if v is None else float(v)) for v in yb]
            if strong:
                ybw = row["ybar_w"] if row["ybar_w"] is not None else [None] * n
                cells += [_fmt(None if v is None else float(v)) for v in ybw]
            writer.writerow(cells)

    last = rows[-1] if rows else {}
    constants = {"D_X": problem.diameter_DX, "C_H": problem.C_H, "B_H": problem.B_H,
                 "L_F": problem.F.lipschitz_constant, "L_H": problem.H.lipschitz_constant,
                 "mu_H": problem.H.strong_monotonicity_mu}
    summary = {
        "run_id": run_id,
        "problem": problem.name,
        "stop_reason": result.stop_reason,
        "iterations": result.state.k,
        "diverged": result.diverged,
        "stepsize_admissible": result.stepsize_admissible and admissible,
        "wall_time_sec": result.wall_time,
        "final": {key: last.get(key) for key in
                  ("k", "err_known", "D", "phi", "gap_fx", "surrogate", "step_norm")},
        "invariant_checks": result.invariants,
        "dominance_violations": dominance_violations,
        "bounds_emitted": bounds.columns,
        "bounds_skipped": bounds.skipped,
        "constants": {k: [v, problem.constant_sources.get(k, "unknown")]
                      for k, v in constants.items()},
    }
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=1, default=_json_default)
    echo = _deep_merge(config, {})
    with open(out / "config.json", "w", encoding="utf-8") as fh:
        json.dump(echo, fh, indent=1, default=_json_default)

    if result.diverged:
        summary["exit_code"] = EXIT_DIVERGED
    elif result.violations > 0 or dominance_violations > 0:
        summary["exit_code"] = EXIT_INVARIANT
    else:
        summary["exit_code"] = EXIT_OK
    return summary


def _json_default(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, float) and math.isinf(v):
        return "unbounded"
    raise TypeError(f"not JSON serializable: {type(v)}")


# ---------------------------------------------------------------------------
# sweeps

def sweep(base_config: dict, grid: dict, out_dir, max_workers: int | None = None) -> dict:
    """Run every variant (concurrently) and emit an aligned comparison table."""
    variants = grid.get("variants", [])
    if len(variants) < 2:
        raise ConfigError("a sweep needs at least two variants")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if max_workers is None:
        max_workers = int(os.environ.get("BIVI_THREADS", "0")) or min(8, os.cpu_count() or 1)

    def one(variant):
        cfg = _deep_merge(base_config, variant.get("overrides", {}))
        cfg["run_id"] = variant["name"]
        try:
            return variant["name"], run_experiment(cfg, out / variant["name"]), None
        except Exception as exc:  # noqa: BLE001 - failed variants are reported, not fatal
            return variant["name"], None, str(exc)

    results = {}
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        for name, summary, error in pool.map(one, variants):
            results[name] = {"summary": summary, "error": error}

    series: dict[str, dict[int, dict]] = {}
    ks: set[int] = set()
    for variant in variants:
        name = variant["name"]
        if results[name]["error"] is not None:
            continue
        per_k = {}
        with open(out / name / "records.csv", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                k = int(row["k"])
                per_k[k] = {"D": row.get("D", ""), "phi": row.get("phi", ""),
                            "err": row.get("err_known", "")}
                ks.add(k)
        series[name] = per_k

    metrics = ("D", "phi", "err")
    header = ["k"]
    for variant in variants:
        header += [f"{variant['name']}/{m}" for m in metrics]
    with open(out / "compare.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for k in sorted(ks):
            cells = [k]
            for variant in variants:
                row = series.get(variant["name"], {}).get(k)
                cells += [row[m] if row else "" for m in metrics]
            writer.writerow(cells)

    failed = {name: r["error"] for name, r in results.items() if r["error"]}
    exit_code = EXIT_OK
    for r in results.values():
        if r["summary"] is not None:
            exit_code = max(exit_code, r["summary"].get("exit_code", 0))
    meta = {"variants": {name: (r["summary"] if r["summary"] else {"failed": r["error"]})
                         for name, r in results.items()},
            "failed": failed, "exit_code": exit_code}
    with open(out / "sweep.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=1, default=_json_default)
    return meta


# ---------------------------------------------------------------------------
# verification

def verify_records(path) -> list[str]:
    """Re-check every dominance invariant present in a records file."""
    violations = []
    with open(path, encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            k = row["k"]
            for measured, targets in DOMINANCE_PAIRS.items():
                mv = row.get(measured, "")
                if mv == "" or mv is None:
                    continue
                mval = float(mv)
                for target in targets:
                    tv = row.get(target, "")
                    if tv in ("", None):
                        continue
                    if mval > float(tv) + diag.DOMINANCE_TOL:
                        violations.append(
                            f"k={k}: {measured}={mval:.6g} exceeds {target}={float(tv):.6g}")
            gv = row.get("gap_fx", "")
            if gv not in ("", None) and float(gv) < -1e-9:
                violations.append(f"k={k}: gap_fx={float(gv):.6g} is negative")
    return violations


# ---------------------------------------------------------------------------
# entry point

def _load_json(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _assemble_config(args) -> dict:
    config: dict = {}
    if args.preset:
        config = preset_config(args.preset)
    if args.config:
        config = _deep_merge(config, _load_json(args.config))
    if not config:
        raise ConfigError("either --preset or --config is required")
    if getattr(args, "check", None):
        config["check_level"] = args.check
    if getattr(args, "max_iters", None) is not None:
        config.setdefault("stop", {})["max_iters"] = args.max_iters
    return config


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="bivi", description="bilevel variational inequality experiment harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one configured run")
    p_run.add_argument("--config", help="run-config JSON file")
    p_run.add_argument("--preset", help="example1 | example2 | example3")
    p_run.add_argument("--out", default="out", help="output directory")
    p_run.add_argument("--check", choices=["off", "sampled", "full"])
    p_run.add_argument("--max-iters", type=int, dest="max_iters")

    p_sweep = sub.add_parser("sweep", help="run a variant grid and emit compare.csv")
    p_sweep.add_argument("--config", help="base run-config JSON file")
    p_sweep.add_argument("--preset", help="base preset name")
    p_sweep.add_argument("--grid", help="grid JSON file with a variants list")
    p_sweep.add_argument("--grid-preset", dest="grid_preset",
                         help="named grid: example1 | example2 | example3")
    p_sweep.add_argument("--out", default="out", help="output directory")
    p_sweep.add_argument("--check", choices=["off", "sampled", "full"])
    p_sweep.add_argument("--max-iters", type=int, dest="max_iters")

    p_verify = sub.add_parser("verify", help="re-check bound dominance in a records file")
    p_verify.add_argument("--records", required=True)

    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            summary = run_experiment(_assemble_config(args), args.out)
            print(f"{summary['run_id']}: {summary['stop_reason']} after "
                  f"{summary['iterations']} iterations "
                  f"(wall {summary['wall_time_sec']:.3f}s)")
            final_err = summary["final"].get("err_known")
            if final_err is not None:
                print(f"  final distance to known solution: {final_err:.3e}")
            return summary["exit_code"]
        if args.command == "sweep":
            config = _assemble_config(args)
            if args.grid:
                grid = _load_json(args.grid)
            elif args.grid_preset:
                grid = grid_preset(args.grid_preset)
            else:
                raise ConfigError("either --grid or --grid-preset is required")
            meta = sweep(config, grid, args.out)
            for name, info in meta["variants"].items():
                status = info.get("stop_reason", "FAILED")
                print(f"  {name}: {status}")
            return meta["exit_code"]
        if args.command == "verify":
            violations = verify_records(args.records)
            if violations:
                for v in violations[:20]:
                    print(f"VIOLATION {v}", file=sys.stderr)
                print(f"{len(violations)} dominance violations", file=sys.stderr)
                return EXIT_INVARIANT
            print("all dominance invariants hold")
            return EXIT_OK
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
