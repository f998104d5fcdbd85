"""Parameter sequences: stepsizes, regularization, inertia, derived weights.

The rules produce (lambda_k, eta_k, alpha_k) plus, in strong mode, beta_k and
the product weights p_k; the state keeps the running sums that the
complexity-bound evaluators consume.  Long strong-mode runs track
q_k = p_{k-1} * alpha_k directly since p_k and alpha_k individually leave
float range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "ScheduleError",
    "ConstantEta", "DiminishingEta", "eta_at",
    "ZeroAlpha", "ConstantAlpha", "AdaptivePen", "SummableTail",
    "alpha_start", "alpha_next",
    "ConstantLambda", "IntervalLambda", "lambda_at", "lambda_range",
    "s_upper_bound", "beta_at", "p_next", "delta_at",
    "Kahan", "ScheduleConfig", "ScheduleState",
]


class ScheduleError(ValueError):
    pass


# ---------------------------------------------------------------------------
# eta rules

@dataclass(frozen=True)
class ConstantEta:
    """Constant regularization weight; 0 degenerates to the plain inertial
    extragradient method on the lower level (no bilevel steering)."""

    value: float

    def __post_init__(self):
        if self.value < 0:
            raise ScheduleError("constant eta must be nonnegative")


@dataclass(frozen=True)
class DiminishingEta:
    eta0: float
    b: float

    def __post_init__(self):
        if not 0 < self.eta0 <= 1:
            raise ScheduleError("diminishing eta needs 0 < eta0 <= 1")
        if not 0 < self.b < 1:
            raise ScheduleError("diminishing eta needs 0 < b < 1")


def eta_at(rule, k: int) -> float:
    if k < 0:
        raise ScheduleError("iteration index must be >= 0")
    if isinstance(rule, ConstantEta):
        return rule.value
    return rule.eta0 / (k + 1) ** rule.b


# ---------------------------------------------------------------------------
# alpha rules

@dataclass(frozen=True)
class ZeroAlpha:
    pass


@dataclass(frozen=True)
class ConstantAlpha:
    value: float

    def __post_init__(self):
        if not 0 <= self.value <= 1:
            raise ScheduleError("constant alpha must lie in [0, 1]")


@dataclass(frozen=True)
class AdaptivePen:
    """Two-branch adaptive rule: ratio decay before m, penalized decay after."""

    m: int
    theta: float
    rho: float
    alpha0: float

    def __post_init__(self):
        if self.m < 0:
            raise ScheduleError("m must be a nonnegative integer")
        if not 0 < self.theta < 1:
            raise ScheduleError("theta must lie in (0, 1)")
        if self.rho < 0:
            raise ScheduleError("rho must be nonnegative")
        if not 0 <= self.alpha0 <= 1:
            raise ScheduleError("alpha0 must lie in [0, 1]")


@dataclass(frozen=True)
class SummableTail:
    """alpha_k frozen at xi_0 before m, then follows the summable xi tail.

    Only valid with a constant eta rule (otherwise the alpha/eta monotonicity
    requirement is not guaranteed).
    """

    m: int
    kind: str  # "geometric" | "power"
    xi0: float
    param: float  # ratio in (0,1) for geometric, exponent > 1 for power

    def __post_init__(self):
        if self.m < 0:
            raise ScheduleError("m must be a nonnegative integer")
        if not 0 <= self.xi0 <= 1:
            raise ScheduleError("xi0 must lie in [0, 1]")
        if self.kind == "geometric":
            if not 0 < self.param < 1:
                raise ScheduleError("geometric tail needs ratio in (0, 1)")
        elif self.kind == "power":
            if self.param <= 1:
                raise ScheduleError("power tail needs exponent > 1 for summability")
        else:
            raise ScheduleError(f"unknown tail kind {self.kind!r}")

    def xi_at(self, j: int) -> float:
        if self.kind == "geometric":
            return self.xi0 * self.param ** j
        return self.xi0 / (j + 1) ** self.param


def alpha_start(rule) -> float:
    """alpha_0 for the rule (a free input for the adaptive branch)."""
    if isinstance(rule, ZeroAlpha):
        return 0.0
    if isinstance(rule, ConstantAlpha):
        return rule.value
    if isinstance(rule, AdaptivePen):
        return rule.alpha0
    return rule.xi_at(0)


def alpha_next(rule, k: int, eta_k: float, eta_prev: float,
               alpha_prev: float, step_norm: float) -> float:
    """alpha_k for k >= 1; the result is clamped into [0, 1].

    For the adaptive-pen rule the k >= m branch is
    eta_k * min(theta^k / (step_norm^2 + rho), alpha_prev / eta_prev),
    which keeps alpha_k / eta_k nonincreasing.
    """
    if k < 1:
        raise ScheduleError("alpha_next is defined for k >= 1")
    if isinstance(rule, ZeroAlpha):
        return 0.0
    if isinstance(rule, ConstantAlpha):
        return rule.value
    if isinstance(rule, AdaptivePen):
        if k < rule.m:
            a = (eta_k / eta_prev) * alpha_prev
        else:
            denom = step_norm * step_norm + rule.rho
            cand = math.inf if denom == 0.0 else rule.theta ** k / denom
            a = eta_k * min(cand, alpha_prev / eta_prev)
        return min(1.0, max(0.0, a))
    j = 0 if k < rule.m else k - rule.m
    return min(1.0, max(0.0, rule.xi_at(j)))


# ---------------------------------------------------------------------------
# lambda rules

@dataclass(frozen=True)
class ConstantLambda:
    value: float

    def __post_init__(self):
        if self.value <= 0:
            raise ScheduleError("stepsize must be positive")


@dataclass(frozen=True)
class IntervalLambda:
    """Deterministic alternation hi, lo, hi, ... inside [lo, hi]."""

    lo: float
    hi: float

    def __post_init__(self):
        if not 0 < self.lo <= self.hi:
            raise ScheduleError("interval stepsize needs 0 < lo <= hi")


def lambda_at(rule, k: int) -> float:
    if isinstance(rule, ConstantLambda):
        return rule.value
    return rule.hi if k % 2 == 0 else rule.lo


def lambda_range(rule) -> tuple[float, float]:
    if isinstance(rule, ConstantLambda):
        return rule.value, rule.value
    return rule.lo, rule.hi


# ---------------------------------------------------------------------------
# derived scalars

def s_upper_bound(theta: float) -> float:
    """Closed-form cap 2*theta/(1-theta) on the inertial sum for pen m = 0."""
    if not 0 < theta < 1:
        raise ScheduleError("theta must lie in (0, 1)")
    return 2.0 * theta / (1.0 - theta)


def beta_at(lam: float, eta: float, mu: float, L_k: float) -> float:
    """Contraction factor ((1 - lam^2 L^2)^-1 + (2 lam eta mu)^-1)^-1."""
    if mu <= 0 or eta <= 0:
        raise ScheduleError("beta requires positive eta and strong-monotonicity modulus")
    if lam <= 0 or (L_k > 0 and lam >= 1.0 / L_k):
        raise ScheduleError("beta requires 0 < lambda < 1/L_k")
    lam_l = lam * L_k
    return 1.0 / (1.0 / (1.0 - lam_l * lam_l) + 1.0 / (2.0 * lam * eta * mu))


def p_next(p_prev: float, beta: float) -> float:
    if not 0 < beta < 1:
        raise ScheduleError("beta must lie in (0, 1)")
    if p_prev < 1.0:
        raise ScheduleError("p must start at 1 and is nondecreasing")
    return p_prev / (1.0 - beta)


def delta_at(alpha: float, step_norm: float) -> float:
    """Inertial correction alpha (1 + alpha) ||x_k - x_{k-1}||^2."""
    if not 0 <= alpha <= 1 or step_norm < 0:
        raise ScheduleError("delta needs alpha in [0,1] and a nonnegative step norm")
    return alpha * (1.0 + alpha) * step_norm * step_norm


class Kahan:
    """Compensated accumulator; keeps long-running sums stable."""

    __slots__ = ("_s", "_c")

    def __init__(self, value: float = 0.0):
        self._s = float(value)
        self._c = 0.0

    def add(self, v: float):
        y = v - self._c
        t = self._s + y
        self._c = (t - self._s) - y
        self._s = t

    @property
    def value(self) -> float:
        return self._s


# ---------------------------------------------------------------------------
# configuration and per-run state

@dataclass(frozen=True)
class ScheduleConfig:
    eta_rule: object
    alpha_rule: object
    lambda_rule: object | None = None
    strong_mode: bool = False
    enforce_stepsize: bool = True

    def resolved(self, *, L_F: float, L_H: float, mu: float) -> tuple["ScheduleConfig", bool]:
        """Fill in the default stepsize and check admissibility.

        Returns (config with a concrete lambda rule, admissible flag).  With
        ``enforce_stepsize`` an inadmissible stepsize raises instead.
        """
        if isinstance(self.alpha_rule, SummableTail) and not isinstance(self.eta_rule, ConstantEta):
            raise ScheduleError("the summable-tail alpha rule requires constant eta")
        eta0 = eta_at(self.eta_rule, 0)
        L0 = L_F + eta0 * L_H
        lam_rule = self.lambda_rule
        if lam_rule is None:
            if L0 <= 0:
                raise ScheduleError("cannot derive a default stepsize with L_F = L_H = 0")
            lam_rule = ConstantLambda(0.99 / L0)
        lam_lo, lam_hi = lambda_range(lam_rule)
        if self.strong_mode:
            if mu <= 0:
                raise ScheduleError("strong mode requires a strongly monotone upper operator")
            admissible = L0 == 0 or lam_hi < 1.0 / L0
        else:
            admissible = L0 == 0 or lam_hi <= 1.0 / L0 + 1e-12
        if not admissible and self.enforce_stepsize:
            raise ScheduleError(
                f"stepsize upper bound {lam_hi} violates the admissible limit 1/L0 = {1.0 / L0}")
        cfg = ScheduleConfig(self.eta_rule, self.alpha_rule, lam_rule,
                             self.strong_mode, self.enforce_stepsize)
        return cfg, admissible


class ScheduleState:
    """Per-run parameter state; owned by a single solver run."""

    def __init__(self, config: ScheduleConfig, *, L_F: float, L_H: float, mu: float):
        if config.lambda_rule is None:
            config, _ = config.resolved(L_F=L_F, L_H=L_H, mu=mu)
        self.config = config
        self.L_F = float(L_F)
        self.L_H = float(L_H)
        self.mu = float(mu)
        self.k = -1
        self.eta_k = self.eta_prev = None
        self.alpha_k = self.alpha_prev = None
        self.lambda_k = None
        self.beta_k = self.beta_prev = None
        self.p_k = 1.0  # p_{-1}
        self.q_k = None  # p_{k-1} * alpha_k
        self.delta_k = 0.0
        self.L_cur = None
        self._s = Kahan()          # sum delta_j / eta_j
        self._shat = Kahan()       # sum delta_j
        self._sum_pdelta = Kahan()  # sum p_{j-1} delta_j
        rule = config.alpha_rule
        self.pen_s_cap = (s_upper_bound(rule.theta)
                          if isinstance(rule, AdaptivePen) and rule.m == 0 else None)

    @property
    def s_partial(self) -> float:
        return self._s.value

    @property
    def shat_partial(self) -> float:
        return self._shat.value

    @property
    def sum_pdelta(self) -> float:
        return self._sum_pdelta.value

    def advance(self, k: int, step_norm: float):
        """Produce the parameters for iteration k (k must increase by 1)."""
        if k != self.k + 1:
            raise ScheduleError(f"schedule advanced out of order: expected {self.k + 1}, got {k}")
        cfg = self.config
        eta = eta_at(cfg.eta_rule, k)
        lam = lambda_at(cfg.lambda_rule, k)
        if k == 0:
            alpha = alpha_start(cfg.alpha_rule)
        else:
            alpha = alpha_next(cfg.alpha_rule, k, eta, self.eta_k, self.alpha_k, step_norm)
        self.L_cur = self.L_F + eta * self.L_H
        beta = None
        if cfg.strong_mode:
            beta = beta_at(lam, eta, self.mu, self.L_cur)
            if k > 0:
                alpha = min(alpha, (1.0 - self.beta_k) * self.alpha_k)
        # shift history
        self.eta_prev, self.alpha_prev, self.beta_prev = self.eta_k, self.alpha_k, self.beta_k
        self.eta_k, self.alpha_k, self.lambda_k, self.beta_k = eta, alpha, lam, beta
        if cfg.strong_mode:
            if k == 0:
                self.q_k = alpha  # p_{-1} = 1
            elif self.alpha_prev == 0.0 or self.q_k == 0.0:
                self.q_k = 0.0
            else:
                # ratio first: alpha <= (1-beta_prev)*alpha_prev by the clip, so
                # the quotient stays <= 1 even in the subnormal range, keeping
                # q = p_{k-1} alpha_k exactly nonincreasing
                ratio = alpha / ((1.0 - self.beta_prev) * self.alpha_prev)
                self.q_k = self.q_k * ratio
            self.p_k = self.p_k / (1.0 - beta)
        delta = delta_at(alpha, step_norm)
        self.delta_k = delta
        self._s.add(delta / eta if eta > 0.0 else (0.0 if delta == 0.0 else math.inf))
        self._shat.add(delta)
        if cfg.strong_mode:
            self._sum_pdelta.add(self.q_k * (1.0 + alpha) * step_norm * step_norm)
        self.k = k
