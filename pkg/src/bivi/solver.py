"""Extragradient iteration with inertial extrapolation and regularization.

One step extrapolates with the inertial parameter, projects the extrapolated
point onto the safeguard set, then performs an extragradient update for the
regularized operator F + eta_k H over X.  The run loop maintains both ergodic
means (stepsize-weighted, and product-weighted for strong mode), the running
schedule sums, and optional per-iteration inequality checks against sampled
reference points.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .core import BilevelProblem, eval_operator, eval_operator_batch
from .geometry import Polyhedron
from .schedule import Kahan, ScheduleConfig, ScheduleState

__all__ = [
    "DivergenceError",
    "StoppingRule",
    "SolverState",
    "step",
    "ergodic_mean",
    "InvariantChecker",
    "RunResult",
    "run",
]

# absolute-plus-scale tolerance model used by every runtime inequality check
PROP1_TOL = 1e-7
LEMMA2_RTOL = 1e-9
MEMBERSHIP_TOL = 1e-9

_RESCALE_TRIGGER = 1e250
_RESCALE_FACTOR = 2.0 ** -832
_RESCALE_LOG10 = 832 * math.log10(2.0)


class DivergenceError(RuntimeError):
    """Iterates left float range; carries the last finite state."""

    def __init__(self, state):
        super().__init__(f"solver diverged at iteration {state.k}")
        self.state = state


@dataclass
class StoppingRule:
    max_iters: int | None = None
    tol_step: float | None = None
    tol_ergodic: float | None = None
    tol_known_solution: float | None = None

    def __post_init__(self):
        if all(v is None for v in (self.max_iters, self.tol_step,
                                   self.tol_ergodic, self.tol_known_solution)):
            raise ValueError("at least one stopping criterion must be set")


class _VecKahan:
    """Elementwise compensated accumulator for the ergodic sums."""

    __slots__ = ("s", "c")

    def __init__(self, dim: int):
        self.s = np.zeros(dim)
        self.c = np.zeros(dim)

    def add(self, v: np.ndarray):
        y = v - self.c
        t = self.s + y
        self.c = (t - self.s) - y
        self.s = t

    def scale(self, factor: float):
        self.s *= factor
        self.c *= factor


class SolverState:
    """Iterate pair, extragradient intermediates and ergodic accumulators."""

    def __init__(self, problem: BilevelProblem, schedule: ScheduleState, x0):
        x0 = problem.X.project(np.asarray(x0, dtype=float))
        self.k = 0
        self.x_prev = x0.copy()   # x_{k-1}
        self.x_curr = x0.copy()   # x_k
        self.x_prev2 = x0.copy()  # x_{k-2}, kept for the extrapolation identity check
        self.w = None
        self.w_prime = None
        self.y = None
        self.Fy = None
        self.Hy = None
        self.last_step_norm = 0.0
        self.schedule = schedule
        n = problem.dim
        self._acc = _VecKahan(n)
        self._lam_sum = Kahan()
        self.strong = schedule.config.strong_mode
        self._acc_w = _VecKahan(n) if self.strong else None
        self._lam_sum_w = Kahan() if self.strong else None
        self._pw = None              # current lambda*eta*p weight, rescaled
        self._prev_lam_eta = None
        self._w_log10_offset = 0.0   # log10 of the cumulative rescale factor

    @property
    def Lambda_plain(self) -> float:
        return self._lam_sum.value

    @property
    def Lambda_weighted(self) -> float:
        if not self.strong:
            return math.nan
        log10 = self.Lambda_weighted_log10
        if math.isnan(log10):
            return 0.0
        return math.inf if log10 > 308.0 else 10.0 ** log10

    @property
    def Lambda_weighted_log10(self) -> float:
        if not self.strong or self._lam_sum_w.value <= 0.0:
            return math.nan
        return math.log10(self._lam_sum_w.value) + self._w_log10_offset


def step(state: SolverState, problem: BilevelProblem, schedule: ScheduleState) -> SolverState:
    """One extragradient iteration; mutates and returns ``state``."""
    k = state.k
    dx = state.x_curr - state.x_prev
    step_norm = float(np.linalg.norm(dx))
    schedule.advance(k, step_norm)
    lam, eta, alpha = schedule.lambda_k, schedule.eta_k, schedule.alpha_k

    w = state.x_curr + alpha * dx
    wp = problem.Omega.project(w)
    g1 = eval_operator(problem.F, wp) + eta * eval_operator(problem.H, wp)
    y = problem.X.project(w - lam * g1)
    Fy = eval_operator(problem.F, y)
    Hy = eval_operator(problem.H, y)
    x_next = problem.X.project(w - lam * (Fy + eta * Hy))
    if not (np.all(np.isfinite(x_next)) and np.all(np.isfinite(y))):
        raise DivergenceError(state)

    state._acc.add(lam * y)
    state._lam_sum.add(lam)
    if state.strong:
        lam_eta = lam * eta
        if state._pw is None:
            state._pw = lam_eta / (1.0 - schedule.beta_k)
        else:
            state._pw *= (lam_eta / state._prev_lam_eta) / (1.0 - schedule.beta_k)
        state._prev_lam_eta = lam_eta
        state._acc_w.add(state._pw * y)
        state._lam_sum_w.add(state._pw)
        if state._lam_sum_w.value > _RESCALE_TRIGGER:
            state._acc_w.scale(_RESCALE_FACTOR)
            state._lam_sum_w._s *= _RESCALE_FACTOR
            state._lam_sum_w._c *= _RESCALE_FACTOR
            state._pw *= _RESCALE_FACTOR
            state._w_log10_offset += _RESCALE_LOG10

    state.w, state.w_prime, state.y = w, wp, y
    state.Fy, state.Hy = Fy, Hy
    state.last_step_norm = step_norm
    state.x_prev2 = state.x_prev
    state.x_prev = state.x_curr
    state.x_curr = x_next
    state.k = k + 1
    return state


def ergodic_mean(state: SolverState, weighting: str = "plain") -> np.ndarray:
    """Ergodic mean of the y iterates; undefined before the first iteration."""
    if state.k < 1:
        raise ValueError("the ergodic mean is undefined at k = 0")
    if weighting == "plain":
        return state._acc.s / state._lam_sum.value
    if weighting == "strong":
        if not state.strong:
            raise ValueError("the product-weighted mean requires strong mode")
        return state._acc_w.s / state._lam_sum_w.value
    raise ValueError(f"unknown weighting {weighting!r}")


class InvariantChecker:
    """Per-iteration inequality checks against reference points sampled once.

    Checks the extragradient descent inequality, the extrapolation distance
    identity and (strong mode) the contraction inequality, each for every
    sampled x in X; membership of the iterates in X is re-verified by
    projection, at a reduced cadence when X needs an iterative projection.
    """

    def __init__(self, problem: BilevelProblem, n_samples: int, seed: int, strong: bool):
        rng = np.random.default_rng(seed)
        lo, hi = problem.X.sample_box()
        raw = rng.uniform(lo, hi, size=(n_samples, problem.dim))
        self.Xs = np.stack([problem.X.project(r) for r in raw])
        self.FXs = eval_operator_batch(problem.F, self.Xs)
        self.HXs = eval_operator_batch(problem.H, self.Xs)
        self.strong = strong
        self.problem = problem
        self.seed = seed
        self.checked = 0
        self.prop1_violations = 0
        self.lemma2_violations = 0
        self.corstr_violations = 0
        self.membership_violations = 0
        self.prop1_worst = math.inf    # min normalized margin, >= -PROP1_TOL when OK
        self.lemma2_worst = 0.0        # max relative identity error
        self.corstr_worst = math.inf
        self._membership_every = 25 if isinstance(problem.X, Polyhedron) else 1
        self._membership_count = 0

    def check(self, state: SolverState, schedule: ScheduleState) -> dict:
        xs = self.Xs
        w, y, xk, xkm1, xnext = state.w, state.y, state.x_prev, state.x_prev2, state.x_curr
        lam, eta, alpha = schedule.lambda_k, schedule.eta_k, schedule.alpha_k
        delta, L_k = schedule.delta_k, schedule.L_cur

        dw = w - xs
        phi_w = np.einsum("ij,ij->i", dw, dw)
        dnext = xnext - xs
        phi_next = np.einsum("ij,ij->i", dnext, dnext)
        dy = y - xs
        wy = w - y
        wy_sq = float(wy @ wy)
        scale = 1.0 + phi_w

        lamL = lam * L_k
        fy_term = float(state.Fy @ y) - xs @ state.Fy
        hy_term = float(state.Hy @ y) - xs @ state.Hy
        rhs = (1.0 - lamL * lamL) * wy_sq + 2.0 * lam * fy_term + 2.0 * lam * eta * hy_term
        prop1_margin = float(np.min((phi_w - phi_next - rhs) / scale))
        if prop1_margin < -PROP1_TOL:
            self.prop1_violations += 1
        self.prop1_worst = min(self.prop1_worst, prop1_margin)

        dk = xk - xs
        phi_k = np.einsum("ij,ij->i", dk, dk)
        dkm1 = xkm1 - xs
        phi_km1 = np.einsum("ij,ij->i", dkm1, dkm1)
        ident = phi_k + alpha * (phi_k - phi_km1) + delta
        lemma2_rel = float(np.max(np.abs(phi_w - ident) / np.maximum(1.0, phi_w)))
        if lemma2_rel > LEMMA2_RTOL:
            self.lemma2_violations += 1
        self.lemma2_worst = max(self.lemma2_worst, lemma2_rel)

        cor_margin = math.nan
        if self.strong:
            beta = schedule.beta_k
            fx_term = np.einsum("ij,ij->i", self.FXs, dy)
            hx_term = np.einsum("ij,ij->i", self.HXs, dy)
            lhs = (1.0 - beta) * phi_w - phi_next
            cor_margin = float(np.min((lhs - 2.0 * lam * fx_term - 2.0 * lam * eta * hx_term) / scale))
            if cor_margin < -PROP1_TOL:
                self.corstr_violations += 1
            self.corstr_worst = min(self.corstr_worst, cor_margin)

        self._membership_count += 1
        if self._membership_count % self._membership_every == 0:
            candidates = [state.x_curr, state.y]
            if state.k >= 1:
                candidates.append(ergodic_mean(state, "plain"))
                if state.strong:
                    candidates.append(ergodic_mean(state, "strong"))
            for v in candidates:
                if np.linalg.norm(self.problem.X.project(v) - v) > MEMBERSHIP_TOL * (1.0 + np.linalg.norm(v)):
                    self.membership_violations += 1

        self.checked += 1
        return {"prop1": prop1_margin, "lemma2": lemma2_rel, "corstr": cor_margin}

    def summary(self) -> dict:
        return {
            "samples": int(self.Xs.shape[0]),
            "seed": self.seed,
            "iterations_checked": self.checked,
            "prop1_violations": self.prop1_violations,
            "lemma2_violations": self.lemma2_violations,
            "corstr_violations": self.corstr_violations,
            "membership_violations": self.membership_violations,
            "prop1_worst_margin": None if self.checked == 0 else self.prop1_worst,
            "lemma2_worst_rel_err": None if self.checked == 0 else self.lemma2_worst,
            "corstr_worst_margin": (None if (self.checked == 0 or not self.strong)
                                    else self.corstr_worst),
        }


@dataclass
class RunResult:
    state: SolverState
    records: list
    stop_reason: str
    invariants: dict | None
    diverged: bool
    stepsize_admissible: bool
    wall_time: float

    @property
    def violations(self) -> int:
        if not self.invariants:
            return 0
        return sum(self.invariants.get(f"{name}_violations", 0)
                   for name in ("prop1", "lemma2", "corstr", "membership"))


def run(problem: BilevelProblem, schedule: ScheduleConfig | ScheduleState,
        stop: StoppingRule, *, x0, check_level: str = "off", check_samples: int = 20,
        seed: int = 0, record_stride: int = 1) -> RunResult:
    """Drive the iteration until a stopping criterion fires.

    Emits one record per ``record_stride`` completed iterations (the final
    iteration is always recorded).  ``check_level`` is ``off``, ``sampled``
    (inequality checks at the record stride) or ``full`` (every iteration).
    """
    if check_level not in ("off", "sampled", "full"):
        raise ValueError(f"unknown check level {check_level!r}")
    t0 = time.perf_counter()
    admissible = True
    if isinstance(schedule, ScheduleConfig):
        cfg, admissible = schedule.resolved(
            L_F=problem.F.lipschitz_constant, L_H=problem.H.lipschitz_constant,
            mu=problem.H.strong_monotonicity_mu)
        schedule = ScheduleState(cfg, L_F=problem.F.lipschitz_constant,
                                 L_H=problem.H.lipschitz_constant,
                                 mu=problem.H.strong_monotonicity_mu)
    state = SolverState(problem, schedule, x0)
    checker = None
    if check_level != "off":
        checker = InvariantChecker(problem, check_samples, seed, state.strong)

    records: list[dict] = []
    ybar_prev = None
    pending_check: dict = {}
    stop_reason = "max_iters"
    diverged = False

    def emit(k, ybar, ybar_w, D, err):
        sch = schedule
        rec = {
            "k": k,
            "x": state.x_curr.copy(),
            "ybar": None if ybar is None else ybar.copy(),
            "ybar_w": None if ybar_w is None else ybar_w.copy(),
            "step_norm": state.last_step_norm,
            "alpha": sch.alpha_k,
            "eta": sch.eta_k,
            "lam": sch.lambda_k,
            "delta": sch.delta_k,
            "s_partial": sch.s_partial,
            "shat_partial": sch.shat_partial,
            "Lambda": state.Lambda_plain,
            "D": D,
            "err_known": err,
            "beta": sch.beta_k,
            "p": sch.p_k if state.strong else None,
            "q": sch.q_k if state.strong else None,
            "sum_pdelta": sch.sum_pdelta if state.strong else None,
            "Lambda_w": state.Lambda_weighted if state.strong else None,
            "Lambda_w_log10": state.Lambda_weighted_log10 if state.strong else None,
            "inv_prop1": pending_check.get("prop1"),
            "inv_lemma2": pending_check.get("lemma2"),
            "inv_corstr": pending_check.get("corstr"),
        }
        records.append(rec)
        pending_check.clear()

    if stop.max_iters is not None and stop.max_iters <= 0:
        return RunResult(state, records, "max_iters", None, False, admissible,
                         time.perf_counter() - t0)

    while True:
        try:
            step(state, problem, schedule)
        except DivergenceError:
            diverged = True
            stop_reason = "diverged"
            break
        k = state.k
        ybar = ergodic_mean(state, "plain")
        ybar_w = ergodic_mean(state, "strong") if state.strong else None
        D = float(np.linalg.norm(ybar - ybar_prev)) if ybar_prev is not None else None
        ybar_prev = ybar
        err = (float(np.linalg.norm(state.x_curr - problem.known_solution))
               if problem.known_solution is not None else None)

        if checker is not None and (check_level == "full" or k % max(1, record_stride) == 0):
            margins = checker.check(state, schedule)
            for key, val in margins.items():
                if math.isnan(val):
                    continue
                prev = pending_check.get(key)
                if prev is None:
                    pending_check[key] = val
                elif key == "lemma2":
                    pending_check[key] = max(prev, val)
                else:
                    pending_check[key] = min(prev, val)

        fired = None
        if (stop.tol_known_solution is not None and err is not None
                and err <= stop.tol_known_solution):
            fired = "tol_known_solution"
        new_step = float(np.linalg.norm(state.x_curr - state.x_prev))
        if fired is None and stop.tol_step is not None and new_step <= stop.tol_step:
            fired = "tol_step"
        if fired is None and stop.tol_ergodic is not None and D is not None and D <= stop.tol_ergodic:
            fired = "tol_ergodic"
        if fired is None and stop.max_iters is not None and k >= stop.max_iters:
            fired = "max_iters"

        if k % max(1, record_stride) == 0 or fired is not None:
            emit(k, ybar, ybar_w, D, err)
        if fired is not None:
            stop_reason = fired
            break

    return RunResult(state, records, stop_reason,
                     checker.summary() if checker is not None else None,
                     diverged, admissible, time.perf_counter() - t0)
