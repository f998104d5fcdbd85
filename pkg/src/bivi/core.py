"""Problem model: the operator pair, feasibility structure, and constants.

A bilevel instance is a lower-level operator F with feasible set X and an
upper-level operator H acting on the lower-level solution set; the constants
(diameter, operator bounds, sharpness) feed the complexity-bound evaluators,
so their provenance (supplied vs estimated) is tracked.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .geometry import SimpleSet, WholeSpace, set_from_descriptor

__all__ = [
    "OperatorSpec",
    "affine_operator",
    "callable_operator",
    "eval_operator",
    "eval_operator_batch",
    "BilevelProblem",
    "ConstantEstimates",
    "estimate_constants",
    "probe_monotonicity",
    "probe_lipschitz",
    "problem_to_dict",
    "problem_from_dict",
    "save_problem",
    "load_problem",
]


@dataclass(frozen=True)
class OperatorSpec:
    """A monotone Lipschitz map with its constants.

    ``kind`` is one of ``affine`` (dense A, offset b), ``callable`` or
    ``ncp-traffic`` (both evaluated through ``fn``).
    ``strong_monotonicity_mu`` equal to 0 means merely monotone.
    """

    kind: str
    dim: int
    lipschitz_constant: float
    strong_monotonicity_mu: float = 0.0
    matrix: np.ndarray | None = None
    offset: np.ndarray | None = None
    fn: Callable[[np.ndarray], np.ndarray] | None = None
    lipschitz_source: str = "supplied"


def affine_operator(A, b, *, lipschitz: float | None = None,
                    mu: float | None = None) -> OperatorSpec:
    """Build an affine operator x -> A x + b, validating monotonicity.

    The symmetric part of A must be positive semidefinite (eigenvalue floor
    -1e-10).  The Lipschitz constant defaults to the spectral norm of A; a
    supplied value must match it within 1e-8.  The strong-monotonicity
    modulus defaults to max(0, lambda_min(sym A)) and may not exceed
    lambda_min(sym A) + 1e-8.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n) or b.shape != (n,):
        raise ValueError("affine operator needs a square matrix and a matching offset")
    sym_min = float(np.linalg.eigvalsh(0.5 * (A + A.T))[0])
    if sym_min < -1e-10:
        raise ValueError(f"affine operator is not monotone: lambda_min(sym A) = {sym_min:.3e}")
    spectral = float(np.linalg.norm(A, 2))
    if lipschitz is None:
        lipschitz, source = spectral, "exact"
    else:
        if abs(float(lipschitz) - spectral) > 1e-8:
            raise ValueError(
                f"supplied Lipschitz constant {lipschitz} differs from the spectral norm {spectral}")
        source = "supplied"
    if mu is None:
        mu = max(0.0, sym_min)
    elif float(mu) > sym_min + 1e-8:
        raise ValueError(f"mu = {mu} exceeds lambda_min(sym A) = {sym_min:.6g}")
    return OperatorSpec("affine", n, float(lipschitz), float(mu), A, b, None, source)


def callable_operator(fn: Callable[[np.ndarray], np.ndarray], dim: int,
                      lipschitz: float, mu: float = 0.0, *,
                      kind: str = "callable",
                      lipschitz_source: str = "supplied") -> OperatorSpec:
    if lipschitz < 0 or mu < 0:
        raise ValueError("operator constants must be nonnegative")
    return OperatorSpec(kind, int(dim), float(lipschitz), float(mu),
                        None, None, fn, lipschitz_source)


def eval_operator(op: OperatorSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (op.dim,):
        raise ValueError(f"operator expects dimension {op.dim}, got shape {x.shape}")
    if op.kind == "affine":
        return op.matrix @ x + op.offset
    return np.asarray(op.fn(x), dtype=float)


def eval_operator_batch(op: OperatorSpec, X: np.ndarray) -> np.ndarray:
    """Evaluate on the rows of X, shape (s, dim) -> (s, dim)."""
    X = np.asarray(X, dtype=float)
    if op.kind == "affine":
        return X @ op.matrix.T + op.offset
    return np.stack([eval_operator(op, row) for row in X])


@dataclass
class BilevelProblem:
    """Operators, sets and constants for one bilevel VI instance.

    ``diameter_DX``/``C_H``/``B_H`` are None when unknown and ``inf`` when
    the set is unbounded; ``constant_sources`` records where each numeric
    constant came from (bounds computed from estimates are indicative, not
    certificates).
    """

    F: OperatorSpec
    H: OperatorSpec
    X: SimpleSet
    Omega: SimpleSet
    diameter_DX: float | None = None
    C_H: float | None = None
    B_H: float | None = None
    known_solution: np.ndarray | None = None
    sharpness: tuple[float, float] | None = None
    constant_sources: dict = field(default_factory=dict)
    name: str = ""
    validate: bool = True

    def __post_init__(self):
        if self.F.dim != self.H.dim or self.F.dim != self.X.dim or self.X.dim != self.Omega.dim:
            raise ValueError("dimensions of F, H, X, Omega must agree")
        if self.known_solution is not None:
            self.known_solution = np.asarray(self.known_solution, dtype=float)
        if self.sharpness is not None:
            sigma, order = self.sharpness
            if sigma <= 0 or order < 1:
                raise ValueError("weak sharpness needs sigma > 0 and order >= 1")
        if self.validate:
            self._validate_geometry()

    def _validate_geometry(self, samples: int = 1000, seed: int = 0):
        if self.known_solution is not None:
            res = np.linalg.norm(self.X.project(self.known_solution) - self.known_solution)
            if res > 1e-10:
                raise ValueError(f"known solution is not in X (projection residual {res:.3e})")
        if isinstance(self.Omega, WholeSpace):
            return
        rng = np.random.default_rng(seed)
        lo, hi = self.X.sample_box()
        for raw in rng.uniform(lo, hi, size=(samples, self.X.dim)):
            p = self.X.project(raw)
            if np.linalg.norm(self.Omega.project(p) - p) > 1e-10:
                raise ValueError("X is not contained in Omega")

    @property
    def dim(self) -> int:
        return self.F.dim


@dataclass(frozen=True)
class ConstantEstimates:
    d_x: float
    c_h: float
    d_source: str
    c_source: str


def estimate_constants(problem: BilevelProblem, samples: int, *, seed: int = 0) -> ConstantEstimates:
    """Lower estimates of the diameter of X and of sup ||H|| over X.

    The diameter is the max pairwise distance over projected samples (exact
    diagonal for a box); unbounded X yields an ``inf`` marker with no numeric
    estimate.  Both sampled values are lower estimates by construction.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    X = problem.X
    rng = np.random.default_rng(seed)
    lo, hi = X.sample_box()
    pts = np.stack([X.project(r) for r in rng.uniform(lo, hi, size=(samples, X.dim))])
    c_h = float(np.max(np.linalg.norm(eval_operator_batch(problem.H, pts), axis=1)))
    exact = X.exact_diameter()
    if exact is not None and math.isinf(exact):
        return ConstantEstimates(math.inf, c_h, "unbounded", "estimated")
    if exact is not None:
        return ConstantEstimates(exact, c_h, "exact", "estimated")
    diff = pts[:, None, :] - pts[None, :, :]
    d_x = float(np.sqrt(np.max(np.einsum("ijk,ijk->ij", diff, diff))))
    return ConstantEstimates(d_x, c_h, "estimated", "estimated")


def _sample_points(region: SimpleSet, count: int, rng) -> np.ndarray:
    lo, hi = region.sample_box()
    raw = rng.uniform(lo, hi, size=(count, region.dim))
    if isinstance(region, WholeSpace):
        return raw
    return np.stack([region.project(r) for r in raw])


def probe_monotonicity(op: OperatorSpec, region: SimpleSet, pairs: int = 1000,
                       seed: int = 0) -> float:
    """Worst value of <op(x)-op(y), x-y> - mu*||x-y||^2 over random pairs."""
    rng = np.random.default_rng(seed)
    xs = _sample_points(region, pairs, rng)
    ys = _sample_points(region, pairs, rng)
    dop = eval_operator_batch(op, xs) - eval_operator_batch(op, ys)
    dx = xs - ys
    vals = np.einsum("ij,ij->i", dop, dx) - op.strong_monotonicity_mu * np.einsum("ij,ij->i", dx, dx)
    return float(np.min(vals))


def probe_lipschitz(op: OperatorSpec, region: SimpleSet, pairs: int = 1000,
                    seed: int = 0) -> float:
    """Worst excess ||op(x)-op(y)|| - L*||x-y|| over random pairs."""
    rng = np.random.default_rng(seed)
    xs = _sample_points(region, pairs, rng)
    ys = _sample_points(region, pairs, rng)
    dop = np.linalg.norm(eval_operator_batch(op, xs) - eval_operator_batch(op, ys), axis=1)
    dx = np.linalg.norm(xs - ys, axis=1)
    return float(np.max(dop - op.lipschitz_constant * dx))


def _operator_to_dict(op: OperatorSpec) -> dict:
    if op.kind != "affine":
        raise ValueError(f"{op.kind} operators are not serializable to a problem file")
    return {
        "kind": "affine",
        "matrix": op.matrix.tolist(),
        "offset": op.offset.tolist(),
        "lipschitz_constant": op.lipschitz_constant,
        "strong_monotonicity_mu": op.strong_monotonicity_mu,
    }


def _const_to_json(v):
    if v is None:
        return "unknown"
    if math.isinf(v):
        return "unbounded"
    return v


def _const_from_json(v):
    if v == "unknown" or v is None:
        return None
    if v == "unbounded":
        return math.inf
    return float(v)


def problem_to_dict(problem: BilevelProblem) -> dict:
    return {
        "name": problem.name,
        "F": _operator_to_dict(problem.F),
        "H": _operator_to_dict(problem.H),
        "X": problem.X.descriptor(),
        "Omega": problem.Omega.descriptor(),
        "diameter_DX": _const_to_json(problem.diameter_DX),
        "C_H": _const_to_json(problem.C_H),
        "B_H": _const_to_json(problem.B_H),
        "known_solution": None if problem.known_solution is None else problem.known_solution.tolist(),
        "sharpness": None if problem.sharpness is None else list(problem.sharpness),
        "constant_sources": dict(problem.constant_sources),
    }


def problem_from_dict(d: dict) -> BilevelProblem:
    def op(spec):
        return affine_operator(spec["matrix"], spec["offset"],
                               lipschitz=spec.get("lipschitz_constant"),
                               mu=spec.get("strong_monotonicity_mu"))

    sharp = d.get("sharpness")
    return BilevelProblem(
        F=op(d["F"]),
        H=op(d["H"]),
        X=set_from_descriptor(d["X"]),
        Omega=set_from_descriptor(d["Omega"]),
        diameter_DX=_const_from_json(d.get("diameter_DX")),
        C_H=_const_from_json(d.get("C_H")),
        B_H=_const_from_json(d.get("B_H")),
        known_solution=d.get("known_solution"),
        sharpness=None if sharp is None else (float(sharp[0]), float(sharp[1])),
        constant_sources=d.get("constant_sources", {}),
        name=d.get("name", ""),
    )


def save_problem(problem: BilevelProblem, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(problem_to_dict(problem), fh, indent=1)


def load_problem(path) -> BilevelProblem:
    with open(path, encoding="utf-8") as fh:
        return problem_from_dict(json.load(fh))
