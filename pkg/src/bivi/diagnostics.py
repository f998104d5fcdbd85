"""Gap oracles, complexity-bound formulas and iteration thresholds.

The dual gap over the lower-level solution set is never claimed exactly
(that set is unknown in general); what is computable is (i) the dual gap
over X for affine operators, by concave maximization, (ii) a known-solution
surrogate lower bound for the upper-level gap, and (iii) the closed-form
upper bounds, evaluated from supplied or estimated constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import BilevelProblem, eval_operator
from .geometry import Box

__all__ = [
    "DiagnosticsError",
    "BoundReport",
    "lemma_min",
    "gap_FX",
    "gap_HQ_surrogate",
    "infeasibility_phi",
    "bound_optimality_diminishing",
    "bound_feasibility_diminishing",
    "bound_optimality_constant",
    "bound_feasibility_constant",
    "weak_sharp_lower_bound",
    "recommended_eta",
    "threshold_constant_eta",
    "strong_beta",
    "strong_bound_optimality",
    "strong_bound_feasibility",
    "strong_thresholds",
    "DOMINANCE_TOL",
]

DOMINANCE_TOL = 1e-6  # slack for measured-vs-bound comparisons


class DiagnosticsError(ValueError):
    pass


@dataclass
class BoundReport:
    """One evaluated bound, with the provenance of every constant used."""

    k: int
    bound_name: str
    value: float
    constants_used: dict = field(default_factory=dict)
    measured: float | None = None
    tolerance: float = DOMINANCE_TOL
    holds: bool | None = None
    slack: float | None = None

    def __post_init__(self):
        if self.measured is not None:
            self.slack = self.value - self.measured
            self.holds = self.measured <= self.value + self.tolerance

    @property
    def indicative(self) -> bool:
        """True when any constant is merely estimated (bound is not a certificate)."""
        return any(src not in ("supplied", "exact") for _, src in self.constants_used.values())


def _require(**constants) -> None:
    missing = [name for name, v in constants.items() if v is None or
               (isinstance(v, float) and math.isnan(v))]
    if missing:
        raise DiagnosticsError(f"bound unavailable: missing constants {missing}")
    infinite = [name for name, v in constants.items()
                if isinstance(v, float) and math.isinf(v)]
    if infinite:
        raise DiagnosticsError(f"bound unavailable: unbounded constants {infinite}")


def lemma_min(a: float, b: float, c: float) -> float:
    """min of a s^2 + b t^2 over s, t >= 0 with s + t >= c."""
    if a < 0 or b < 0 or c < 0:
        raise DiagnosticsError("lemma_min needs a, b >= 0 and c >= 0")
    if a + b == 0:
        raise DiagnosticsError("lemma_min needs a + b > 0")
    return a * b / (a + b) * c * c


def infeasibility_phi(y, F_op) -> float:
    """Complementarity residual: neg parts of y and F(y) plus |<y, F(y)>|."""
    y = np.asarray(y, dtype=float)
    Fy = eval_operator(F_op, y)
    neg_y = np.minimum(y, 0.0)
    neg_f = np.minimum(Fy, 0.0)
    return float(neg_y @ neg_y + neg_f @ neg_f + abs(y @ Fy))


def gap_HQ_surrogate(z, problem: BilevelProblem) -> float:
    """<H(x*), z - x*>: a lower bound on the upper-level dual gap at z."""
    if problem.known_solution is None:
        raise DiagnosticsError("surrogate gap unavailable: no known solution")
    xs = problem.known_solution
    z = np.asarray(z, dtype=float)
    return float(eval_operator(problem.H, xs) @ (z - xs))


def _check_membership(z, problem):
    res = float(np.linalg.norm(problem.X.project(z) - z))
    if res > 1e-7 * (1.0 + float(np.linalg.norm(z))):
        raise DiagnosticsError(f"gap oracle needs z in X (projection residual {res:.3e})")


def gap_FX(z, problem: BilevelProblem, method: str = "exact-affine", *,
           samples: int = 256, seed: int = 0, tol: float = 1e-9,
           max_steps: int = 100_000) -> float:
    """Dual gap of z over X: sup of <F(x), z - x> for x in X.

    ``exact-affine`` maximizes the concave objective by projected gradient
    ascent (closed form for a box when the quadratic part vanishes);
    ``sampled`` returns the max over projected random points, which is only
    a lower bound.
    """
    z = np.asarray(z, dtype=float)
    _check_membership(z, problem)
    F = problem.F
    if method == "sampled":
        rng = np.random.default_rng(seed)
        lo, hi = problem.X.sample_box()
        best = -math.inf
        for raw in rng.uniform(lo, hi, size=(samples, problem.dim)):
            x = problem.X.project(raw)
            best = max(best, float(eval_operator(F, x) @ (z - x)))
        return best
    if method != "exact-affine":
        raise DiagnosticsError(f"unknown gap method {method!r}")
    if F.kind != "affine":
        raise DiagnosticsError("exact gap needs an affine lower-level operator")
    A, b = F.matrix, F.offset
    G = A + A.T  # twice the symmetric part; the negated quadratic Hessian
    if float(np.linalg.eigvalsh(G)[0]) < -1e-9:
        raise DiagnosticsError("objective is not concave; refusing exact mode")
    lin = A.T @ z - b
    L_grad = float(np.linalg.norm(G, 2))
    if isinstance(problem.X, Box) and L_grad <= 1e-13:
        # linear objective over a box: componentwise corner selection
        xhat = np.where(lin > 0, problem.X.hi, np.where(lin < 0, problem.X.lo, z))
        return float(eval_operator(F, xhat) @ (z - xhat))

    def grad(x):
        return lin - G @ x

    t = 1.0 / max(L_grad, 1e-13)
    x = z.copy()
    v = x.copy()
    theta = 1.0
    converged = False
    for _ in range(max_steps):
        x_new = problem.X.project(v + t * grad(v))
        theta_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * theta * theta))
        v = x_new + ((theta - 1.0) / theta_new) * (x_new - x)
        theta = theta_new
        x = x_new
        resid = float(np.linalg.norm(x - problem.X.project(x + t * grad(x))))
        if resid <= tol:
            converged = True
            break
    if not converged:
        raise DiagnosticsError("gap ascent hit the step cap before reaching stationarity")
    return float(eval_operator(F, x) @ (z - x))


# ---------------------------------------------------------------------------
# monotone-mode bounds

def bound_optimality_diminishing(k: int, *, DX: float, lam_lo: float,
                                 eta0: float, b: float, s: float) -> float:
    """Upper-level gap bound under eta_k = eta0/(k+1)^b."""
    _require(DX=DX, lam_lo=lam_lo, eta0=eta0, b=b, s=s)
    if k < 1:
        raise DiagnosticsError("bounds are stated for k >= 1")
    return (DX * DX / (2.0 ** (1.0 - b) * lam_lo * eta0)) / k ** (1.0 - b) \
        + (s / (2.0 * lam_lo)) / k


def bound_feasibility_diminishing(k: int, *, DX: float, lam_lo: float, lam_hi: float,
                                  eta0: float, b: float, s: float, CH: float) -> float:
    """Lower-level gap bound under eta_k = eta0/(k+1)^b."""
    _require(DX=DX, lam_lo=lam_lo, lam_hi=lam_hi, eta0=eta0, b=b, s=s, CH=CH)
    if k < 1:
        raise DiagnosticsError("bounds are stated for k >= 1")
    return (DX * DX / (2.0 * lam_lo)) / k + (s / (2.0 * lam_lo)) / k \
        + (eta0 * lam_hi * CH * DX / ((1.0 - b) * lam_lo)) / k ** b


def bound_optimality_constant(k: int, *, DX: float, lam_lo: float,
                              eta: float, shat: float) -> float:
    _require(DX=DX, lam_lo=lam_lo, eta=eta, shat=shat)
    if k < 1:
        raise DiagnosticsError("bounds are stated for k >= 1")
    return (DX * DX + shat) / (2.0 * lam_lo * eta) / k


def bound_feasibility_constant(k: int, *, DX: float, lam_lo: float, lam_hi: float,
                               eta: float, shat: float, CH: float) -> float:
    _require(DX=DX, lam_lo=lam_lo, lam_hi=lam_hi, eta=eta, shat=shat, CH=CH)
    if k < 1:
        raise DiagnosticsError("bounds are stated for k >= 1")
    return (DX * DX + shat) / (2.0 * lam_lo) / k + eta * lam_hi * CH * DX / lam_lo


def weak_sharp_lower_bound(feasibility_bound_value: float, B_H: float,
                           sigma: float, order: float) -> float:
    """Negative floor on the upper-level gap from weak sharpness."""
    if sigma <= 0 or order < 1:
        raise DiagnosticsError("weak sharpness needs sigma > 0 and order >= 1")
    _require(B_H=B_H)
    if feasibility_bound_value < 0:
        raise DiagnosticsError("the feasibility bound must be nonnegative")
    return -(B_H / sigma ** (1.0 / order)) * feasibility_bound_value ** (1.0 / order)


def recommended_eta(eps: float, D0: float) -> float:
    if eps <= 0 or D0 <= 0:
        raise DiagnosticsError("eps and D0 must be positive")
    return eps / (2.0 * D0)


def threshold_constant_eta(eps: float, D0: float, *, DX: float, shat: float,
                           lam_lo: float, lam_hi: float | None = None,
                           CH: float | None = None) -> int:
    """Iteration count after which both gaps drop below eps at eta = eps/(2 D0).

    D0 must dominate lam_hi*CH*DX/lam_lo (checked when those constants are
    given).
    """
    _require(DX=DX, shat=shat, lam_lo=lam_lo)
    if eps <= 0 or D0 <= 0:
        raise DiagnosticsError("eps and D0 must be positive")
    if lam_hi is not None and CH is not None:
        floor = lam_hi * CH * DX / lam_lo
        if D0 < floor - 1e-12:
            raise DiagnosticsError(f"D0 = {D0} is below the required floor {floor}")
    core = (DX * DX + shat) / lam_lo
    return max(math.ceil(D0 * core / (eps * eps)), math.ceil(core / eps))


# ---------------------------------------------------------------------------
# strong-monotonicity bounds

def strong_beta(*, lam_lo: float, lam_hi: float, eta: float, mu: float, L: float) -> float:
    """Worst-case contraction factor over the stepsize interval."""
    if mu <= 0:
        raise DiagnosticsError("strong bounds need mu > 0")
    if lam_hi <= 0 or (L > 0 and lam_hi >= 1.0 / L):
        raise DiagnosticsError("strong bounds need lam_hi < 1/L")
    lamL = lam_hi * L
    return 1.0 / (1.0 / (1.0 - lamL * lamL) + 1.0 / (2.0 * lam_lo * eta * mu))


def strong_bound_optimality(k: int, *, DX: float, lam_lo: float, eta: float,
                            beta: float, sum_pdelta: float | None = None,
                            form: str = "general") -> float:
    """Upper-level gap bound at the product-weighted ergodic mean.

    ``general`` uses the accumulated inertial sum, ``no-inertia`` drops it,
    ``closed`` is the (k+1)(1-beta)^k closed form that caps the sum.
    """
    _require(DX=DX, lam_lo=lam_lo, eta=eta, beta=beta)
    if k < 1:
        raise DiagnosticsError("bounds are stated for k >= 1")
    if not 0 < beta < 1:
        raise DiagnosticsError("beta must lie in (0, 1)")
    decay = (1.0 - beta) ** k
    if form == "general":
        _require(sum_pdelta=sum_pdelta)
        return decay / (2.0 * lam_lo * eta) * (DX * DX + sum_pdelta)
    if form == "no-inertia":
        return decay * DX * DX / (2.0 * lam_lo * eta)
    if form == "closed":
        return (k + 1) * decay * DX * DX / (lam_lo * eta)
    raise DiagnosticsError(f"unknown form {form!r}")


def strong_bound_feasibility(k: int, *, DX: float, CH: float, lam_lo: float,
                             lam_hi: float, eta: float, beta: float,
                             sum_pdelta: float | None = None,
                             form: str = "general") -> float:
    """Lower-level gap bound at the product-weighted ergodic mean."""
    _require(DX=DX, CH=CH, lam_lo=lam_lo, lam_hi=lam_hi, eta=eta, beta=beta)
    if k < 1:
        raise DiagnosticsError("bounds are stated for k >= 1")
    if not 0 < beta < 1:
        raise DiagnosticsError("beta must lie in (0, 1)")
    decay = (1.0 - beta) ** k
    floor = eta * lam_hi * CH * DX / lam_lo
    if form == "general":
        _require(sum_pdelta=sum_pdelta)
        return decay / (2.0 * lam_lo) * (DX * DX + sum_pdelta) + floor
    if form == "closed":
        return (k + 1) * decay * DX * DX / lam_lo + floor
    raise DiagnosticsError(f"unknown form {form!r}")


def _scan_threshold(coef: float, log_arg, k_cap: int = 10 ** 9) -> int:
    """Smallest k >= 1 with k >= ceil(coef * log(log_arg(k))).

    The right side is nondecreasing in k, so jumping to it preserves
    minimality; growth is logarithmic so the scan terminates.
    """
    k = 1
    while k <= k_cap:
        arg = log_arg(k)
        if arg <= 0:
            raise DiagnosticsError("threshold log argument must be positive")
        rhs = math.ceil(coef * math.log(arg))
        if k >= rhs:
            return k
        k = rhs
    raise DiagnosticsError("threshold scan exceeded its cap")


def strong_thresholds(eps: float, *, DX: float, lam_lo: float, lam_hi: float,
                      mu: float, L: float, D0: float, eta: float | None = None,
                      require_joint: bool = True) -> tuple[int, int, int | None]:
    """(k_opt, k_feas, k_joint) for the constant-eta strong-monotone regime.

    ``eta`` defaults to eps/(2 D0), the tolerance-matched choice; the
    feasibility and joint thresholds always use that choice.  k_joint
    additionally needs D0 > eps (with ``require_joint=False`` it comes back
    as None instead of raising).
    """
    _require(DX=DX, lam_lo=lam_lo, lam_hi=lam_hi, mu=mu, L=L, D0=D0)
    if eps <= 0:
        raise DiagnosticsError("eps must be positive")
    if lam_hi * L >= 1.0:
        raise DiagnosticsError("strong thresholds need lam_hi < 1/L")
    eta_opt = recommended_eta(eps, D0) if eta is None else eta
    one_minus = 1.0 - (lam_hi * L) ** 2
    dx2 = DX * DX
    k_opt = _scan_threshold(
        1.0 / one_minus + 1.0 / (2.0 * lam_lo * eta_opt * mu),
        lambda k: (k + 1) * dx2 / (lam_lo * eta_opt * eps))
    coef_feas = 1.0 / one_minus + D0 / (lam_lo * mu * eps)
    k_feas = _scan_threshold(coef_feas, lambda k: 2.0 * (k + 1) * dx2 / (lam_lo * eps))
    if D0 <= eps:
        if require_joint:
            raise DiagnosticsError("the joint threshold requires D0 > eps")
        return k_opt, k_feas, None
    k_joint = _scan_threshold(coef_feas,
                              lambda k: 2.0 * (k + 1) * dx2 * D0 / (lam_lo * eps * eps))
    return k_opt, k_feas, k_joint
