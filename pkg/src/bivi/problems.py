"""Benchmark instances: the zero-sum game, random polyhedral instances, and
the path-based traffic equilibrium written as a complementarity problem.

Random instances use a named 64-bit generator (PCG64) with a documented draw
order, and floats derive from a fixed uniform-from-bits map, so instances
reproduce across platforms at the integer level.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .core import (BilevelProblem, ConstantEstimates, OperatorSpec,
                   affine_operator, callable_operator, estimate_constants)
from .geometry import Box, NonnegOrthant, Polyhedron, WholeSpace

__all__ = [
    "TrafficNetwork",
    "make_example1",
    "make_example2",
    "make_example3",
    "default_network",
    "load_network",
    "save_network",
    "total_cost",
    "total_cost_gradient",
]

log = logging.getLogger(__name__)


def _uniform(rng, lo: float, hi: float, shape) -> np.ndarray:
    """Uniform floats in [lo, hi) built from 53-bit integers (documented map)."""
    u = rng.integers(0, 1 << 53, size=shape).astype(float) / float(1 << 53)
    return lo + (hi - lo) * u


# ---------------------------------------------------------------------------
# Example 1: two-player zero-sum game, upper level selects the least-norm
# equilibrium.

def make_example1() -> BilevelProblem:
    A = np.array([[0.0, -0.1], [0.1, 0.0]])
    b = np.array([1.0, 0.0])
    F = affine_operator(A, b)                      # L_F = 0.1, merely monotone
    H = affine_operator(np.eye(2), np.zeros(2))    # identity: L_H = 1, mu = 1
    X = Box([11.0, 10.0], [60.0, 50.0])
    # The lower-level solutions form the bottom edge [11,60] x {10}: there
    # F(x) = [0, 0.1 x1], so <F(x), y - x> = 0.1 x1 (y2 - 10) >= 1.1 dist(y, edge)
    # for every y in the box -- weak sharpness with sigma = 1.1, order 1.
    # sup ||H|| is attained at the far box corner, and over the edge at [60,10].
    return BilevelProblem(
        F=F, H=H, X=X, Omega=WholeSpace(2),
        diameter_DX=float(np.hypot(49.0, 40.0)),
        C_H=float(np.hypot(60.0, 50.0)),
        B_H=float(np.hypot(60.0, 10.0)),
        known_solution=np.array([11.0, 10.0]),
        sharpness=(1.1, 1.0),
        constant_sources={"D_X": "supplied", "C_H": "supplied", "B_H": "supplied",
                          "sigma": "supplied", "order": "supplied"},
        name="example1",
    )


# ---------------------------------------------------------------------------
# Example 2: random strongly monotone upper level over a random polyhedron.

def make_example2(m: int = 100, seed: int = 0, *, n_rows: int = 10,
                  estimate: bool = False, estimate_samples: int = 200,
                  max_retries: int = 10) -> BilevelProblem:
    """Random instance of dimension m.

    Draw order with generator PCG64(seed): E (n_rows x m, rows filled
    row-major, uniform [-1,1]), Q0 (m x m, uniform [-2,2]), N (m x m,
    uniform [-2,2]), p (m, uniform [-2,2]), q (m, uniform [-2,2]).
    The constraint offsets are all m, which makes the all-ones vector
    feasible; an infeasible draw (probability zero) retries with seed+1.
    """
    if m < 2:
        raise ValueError("example 2 needs dimension m >= 2")
    used_seed = seed
    for attempt in range(max_retries):
        rng = np.random.Generator(np.random.PCG64(used_seed))
        E = _uniform(rng, -1.0, 1.0, (n_rows, m))
        Q0 = _uniform(rng, -2.0, 2.0, (m, m))
        N = _uniform(rng, -2.0, 2.0, (m, m))
        p = _uniform(rng, -2.0, 2.0, m)
        q = _uniform(rng, -2.0, 2.0, m)
        f = float(m) * np.ones(n_rows)
        ones = np.ones(m)
        if np.all(E @ ones <= f):
            break
        log.warning("example2 seed %d produced an infeasible start; retrying with %d",
                    used_seed, used_seed + 1)
        used_seed += 1
    else:
        raise RuntimeError("could not generate a feasible example-2 instance")

    Q = 0.5 * (Q0 + Q0.T) + float(m) * np.eye(m)
    H = affine_operator(Q, p)          # mu = lambda_min(Q) recorded exactly
    F = affine_operator(N.T @ N, q)    # Gram matrix: PSD, L_F = ||N^T N||
    X = Polyhedron(E, f, nonneg=True, feasible_point=ones)
    problem = BilevelProblem(
        F=F, H=H, X=X, Omega=WholeSpace(m),
        diameter_DX=None, C_H=None, B_H=None,
        constant_sources={"mu": "exact", "L_F": "exact", "L_H": "exact"},
        name=f"example2(m={m},seed={used_seed})",
    )
    if estimate:
        est = estimate_constants(problem, estimate_samples, seed=used_seed)
        problem.diameter_DX = est.d_x
        problem.C_H = est.c_h
        problem.constant_sources.update({"D_X": est.d_source, "C_H": est.c_source})
    return problem


# ---------------------------------------------------------------------------
# Example 3: traffic user equilibrium over paths, best-equilibrium selection.

@dataclass
class TrafficNetwork:
    """Arc parameters plus the arc-path and OD-path incidence structure."""

    t0: np.ndarray        # free-flow times, one per arc
    cap: np.ndarray       # capacities
    power: np.ndarray     # congestion exponents, >= 1
    delta: np.ndarray     # (arcs x paths) 0/1 incidence
    od_incidence: np.ndarray  # (od pairs x paths) 0/1 incidence
    demand: np.ndarray    # one per OD pair
    note: str = ""

    def __post_init__(self):
        self.t0 = np.asarray(self.t0, dtype=float)
        self.cap = np.asarray(self.cap, dtype=float)
        self.power = np.asarray(self.power, dtype=float)
        self.delta = np.asarray(self.delta, dtype=float)
        self.od_incidence = np.asarray(self.od_incidence, dtype=float)
        self.demand = np.asarray(self.demand, dtype=float)
        arcs, paths = self.delta.shape
        if self.t0.shape != (arcs,) or self.cap.shape != (arcs,) or self.power.shape != (arcs,):
            raise ValueError("arc parameter arrays must match the number of delta rows")
        if self.od_incidence.shape[1] != paths:
            raise ValueError("od_incidence and delta disagree on the number of paths")
        if self.demand.shape != (self.od_incidence.shape[0],):
            raise ValueError("demand length must match the number of OD pairs")
        for name, M in (("delta", self.delta), ("od_incidence", self.od_incidence)):
            if not np.all((M == 0) | (M == 1)):
                raise ValueError(f"{name} must be a 0/1 matrix")
        col_use = self.delta.sum(axis=0)
        if np.any(col_use == 0):
            raise ValueError(f"path {int(np.argmin(col_use))} uses no arc (zero delta column)")
        col_od = self.od_incidence.sum(axis=0)
        if np.any(col_od != 1):
            raise ValueError(
                f"path {int(np.argmax(col_od != 1))} must belong to exactly one OD pair")
        if np.any(self.power < 1):
            raise ValueError("congestion exponents must be >= 1")
        if np.any(self.t0 <= 0) or np.any(self.cap <= 0):
            raise ValueError("free-flow times and capacities must be positive")

    @property
    def n_arcs(self) -> int:
        return self.delta.shape[0]

    @property
    def n_paths(self) -> int:
        return self.delta.shape[1]

    @property
    def n_od(self) -> int:
        return self.od_incidence.shape[0]

    def arc_time(self, flow: np.ndarray) -> np.ndarray:
        """Congestible travel time t0 (1 + 0.15 (flow/cap)^power) per arc."""
        return self.t0 * (1.0 + 0.15 * (flow / self.cap) ** self.power)

    def arc_time_derivative(self, flow: np.ndarray) -> np.ndarray:
        return 0.15 * self.t0 * self.power * flow ** (self.power - 1.0) / self.cap ** self.power


def total_cost(net: TrafficNetwork, h: np.ndarray) -> float:
    """Aggregate path cost: sum over paths of the path travel time."""
    flow = net.delta @ h
    return float(net.delta.sum(axis=1) @ net.arc_time(flow))


def total_cost_gradient(net: TrafficNetwork, h: np.ndarray) -> np.ndarray:
    flow = net.delta @ h
    m_arc = net.delta.sum(axis=1)  # paths traversing each arc
    return net.delta.T @ (m_arc * net.arc_time_derivative(flow))


# Reconstructed standard 13-node instance: 19 arcs, 25 paths, 4 OD pairs.
# Origins 1 and 4, destinations 2 and 3; nodes 5-13 are intermediate.
_ARC_TAILS_HEADS = [
    (1, 5), (1, 12), (4, 5), (4, 9), (5, 6), (5, 9), (6, 7), (6, 10), (7, 8),
    (7, 11), (8, 2), (9, 10), (9, 13), (10, 11), (11, 2), (11, 3), (12, 6),
    (12, 8), (13, 3),
]
_ARC_T0 = [7.0, 9.0, 9.0, 12.0, 3.0, 9.0, 5.0, 13.0, 5.0, 9.0, 9.0, 10.0,
           9.0, 6.0, 9.0, 8.0, 7.0, 14.0, 11.0]
_ARC_CAP = [800.0, 400.0, 200.0, 800.0, 350.0, 250.0, 250.0, 300.0, 200.0,
            550.0, 700.0, 550.0, 200.0, 400.0, 500.0, 300.0, 200.0, 400.0, 600.0]
# Paths as 1-based arc index sequences, grouped by OD pair.
_PATHS_BY_OD = [
    # 1 -> 2
    [[1, 5, 7, 9, 11], [1, 5, 7, 10, 15], [1, 5, 8, 14, 15], [1, 6, 12, 14, 15],
     [2, 17, 7, 9, 11], [2, 17, 7, 10, 15], [2, 17, 8, 14, 15], [2, 18, 11]],
    # 1 -> 3
    [[1, 5, 7, 10, 16], [1, 5, 8, 14, 16], [1, 6, 12, 14, 16], [1, 6, 13, 19],
     [2, 17, 7, 10, 16], [2, 17, 8, 14, 16]],
    # 4 -> 2
    [[3, 5, 7, 9, 11], [3, 5, 7, 10, 15], [3, 5, 8, 14, 15], [3, 6, 12, 14, 15],
     [4, 12, 14, 15]],
    # 4 -> 3
    [[3, 5, 7, 10, 16], [3, 5, 8, 14, 16], [3, 6, 12, 14, 16], [3, 6, 13, 19],
     [4, 12, 14, 16], [4, 13, 19]],
]
_DEMAND = [400.0, 800.0, 600.0, 200.0]
_OD_ENDPOINTS = [(1, 2), (1, 3), (4, 2), (4, 3)]

_NETWORK_NOTE = ("reconstructed from the standard literature instance; "
                 "results on it are qualitative, not source-exact")


def default_network(n_a: float = 1.0) -> TrafficNetwork:
    """The shipped 19-arc/25-path instance with a common congestion exponent."""
    arcs = len(_ARC_TAILS_HEADS)
    paths = sum(len(g) for g in _PATHS_BY_OD)
    delta = np.zeros((arcs, paths))
    od = np.zeros((len(_PATHS_BY_OD), paths))
    j = 0
    for o, group in enumerate(_PATHS_BY_OD):
        for path in group:
            node = _OD_ENDPOINTS[o][0]
            for a in path:
                tail, head = _ARC_TAILS_HEADS[a - 1]
                if tail != node:
                    raise AssertionError(f"path {j} breaks at arc {a}")
                node = head
                delta[a - 1, j] = 1.0
            if node != _OD_ENDPOINTS[o][1]:
                raise AssertionError(f"path {j} does not reach its destination")
            od[o, j] = 1.0
            j += 1
    return TrafficNetwork(
        t0=np.array(_ARC_T0), cap=np.array(_ARC_CAP),
        power=np.full(arcs, float(n_a)), delta=delta, od_incidence=od,
        demand=np.array(_DEMAND), note=_NETWORK_NOTE)


def save_network(net: TrafficNetwork, path):
    payload = {
        "note": net.note,
        "arcs": [{"t0": float(t), "cap": float(c), "n": float(n)}
                 for t, c, n in zip(net.t0, net.cap, net.power)],
        "delta": net.delta.astype(int).tolist(),
        "od_incidence": net.od_incidence.astype(int).tolist(),
        "demand": net.demand.tolist(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1)


def _network_from_dict(payload: dict) -> TrafficNetwork:
    arcs = payload["arcs"]
    return TrafficNetwork(
        t0=[a["t0"] for a in arcs],
        cap=[a["cap"] for a in arcs],
        power=[a["n"] for a in arcs],
        delta=payload["delta"],
        od_incidence=payload["od_incidence"],
        demand=payload["demand"],
        note=payload.get("note", ""),
    )


def load_network(path=None) -> TrafficNetwork:
    """Load a network file; with no path, the shipped default instance."""
    if path is None:
        text = resources.files("bivi.data").joinpath("nguyen_dupuis.json").read_text()
        return _network_from_dict(json.loads(text))
    with open(path, encoding="utf-8") as fh:
        return _network_from_dict(json.load(fh))


def _traffic_operator(net: TrafficNetwork) -> OperatorSpec:
    P, O = net.n_paths, net.n_od
    dim = P + O
    if np.all(net.power == 1.0):
        D = np.diag(net.arc_time_derivative(np.ones(net.n_arcs)))  # constant for n = 1
        upper = net.delta.T @ D @ net.delta
        A = np.block([[upper, -net.od_incidence.T],
                      [net.od_incidence, np.zeros((O, O))]])
        b = np.concatenate([net.delta.T @ net.t0, -net.demand])
        return affine_operator(A, b)

    def F(x):
        h, u = x[:P], x[P:]
        costs = net.delta.T @ net.arc_time(net.delta @ h)
        return np.concatenate([costs - net.od_incidence.T @ u,
                               net.od_incidence @ h - net.demand])

    # Lipschitz estimate: max Jacobian spectral norm over sampled flows.
    rng = np.random.default_rng(1)
    L = 0.0
    for _ in range(32):
        h = rng.uniform(0.0, 2.0 * float(np.max(net.demand)), P)
        Cp = np.diag(net.arc_time_derivative(net.delta @ h))
        J = np.block([[net.delta.T @ Cp @ net.delta, -net.od_incidence.T],
                      [net.od_incidence, np.zeros((O, O))]])
        L = max(L, float(np.linalg.norm(J, 2)))
    return callable_operator(F, dim, L, kind="ncp-traffic", lipschitz_source="estimated")


def _traffic_upper(net: TrafficNetwork) -> OperatorSpec:
    P, O = net.n_paths, net.n_od
    if np.all(net.power == 1.0):
        grad = total_cost_gradient(net, np.zeros(P))  # constant gradient for n = 1
        return affine_operator(np.zeros((P + O, P + O)),
                               np.concatenate([grad, np.zeros(O)]))

    def H(x):
        return np.concatenate([total_cost_gradient(net, x[:P]), np.zeros(O)])

    rng = np.random.default_rng(2)
    L = 0.0
    hi = 2.0 * float(np.max(net.demand))
    for _ in range(32):
        h = rng.uniform(0.0, hi, P)
        m_arc = net.delta.sum(axis=1)
        flow = net.delta @ h
        second = (0.15 * net.t0 * net.power * (net.power - 1.0)
                  * flow ** np.maximum(net.power - 2.0, 0.0) / net.cap ** net.power)
        Hess = net.delta.T @ np.diag(m_arc * second) @ net.delta
        L = max(L, float(np.linalg.norm(Hess, 2)))
    return callable_operator(H, P + O, L, kind="callable", lipschitz_source="estimated")


def _check_gradient(net: TrafficNetwork, seed: int = 3, rel_tol: float = 1e-6):
    rng = np.random.default_rng(seed)
    hi = 2.0 * float(np.max(net.demand))
    for _ in range(5):
        h = rng.uniform(0.0, hi, net.n_paths)
        g = total_cost_gradient(net, h)
        fd = np.empty_like(g)
        eps = 1e-5 * max(1.0, float(np.max(np.abs(h))))
        for i in range(h.size):
            e = np.zeros_like(h)
            e[i] = eps
            fd[i] = (total_cost(net, h + e) - total_cost(net, h - e)) / (2.0 * eps)
        rel = np.linalg.norm(g - fd) / max(1.0, np.linalg.norm(g))
        if rel > rel_tol:
            raise ValueError(f"analytic gradient disagrees with central differences "
                             f"(relative error {rel:.3e})")


def make_example3(network: TrafficNetwork | None = None) -> BilevelProblem:
    """Best-equilibrium selection on the traffic network as an NCP over x = [h; u]."""
    net = network if network is not None else default_network()
    _check_gradient(net)
    F = _traffic_operator(net)
    H = _traffic_upper(net)
    dim = net.n_paths + net.n_od
    integral_powers = bool(np.all(net.power == np.round(net.power)))
    omega = WholeSpace(dim) if integral_powers else NonnegOrthant(dim)
    ch = None
    sources = {"L_F": F.lipschitz_source, "L_H": H.lipschitz_source, "D_X": "unbounded"}
    if H.kind == "affine":
        ch = float(np.linalg.norm(H.offset))  # constant upper operator
        sources["C_H"] = "exact"
    problem = BilevelProblem(
        F=F, H=H, X=NonnegOrthant(dim), Omega=omega,
        diameter_DX=math.inf, C_H=ch, B_H=None,
        constant_sources=sources,
        name="example3",
    )
    problem.network = net
    return problem
