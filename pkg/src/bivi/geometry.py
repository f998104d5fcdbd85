"""Orthogonal projections onto the simple convex sets used by the solver.

Every set exposes ``project``; boxes, orthants, singletons and the whole
space are exact and componentwise, polyhedra use a Dykstra-style cyclic
projection over their halfspaces (plus the nonnegative orthant).
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "ProjectionError",
    "halfspace_project",
    "SimpleSet",
    "WholeSpace",
    "Box",
    "NonnegOrthant",
    "Singleton",
    "Polyhedron",
    "set_from_descriptor",
]


class ProjectionError(RuntimeError):
    """Iterative projection did not reach its tolerance within the sweep cap."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (achieved residual {residual:.3e})")
        self.residual = residual


def halfspace_project(a, c, x):
    """Project ``x`` onto the halfspace ``{z : <a, z> <= c}``."""
    a = np.asarray(a, dtype=float)
    x = np.asarray(x, dtype=float)
    sq = float(a @ a)
    if sq == 0.0:
        raise ValueError("halfspace normal must be nonzero")
    viol = float(a @ x) - c
    if viol <= 0.0:
        return x.copy()
    return x - (viol / sq) * a


class SimpleSet:
    """A nonempty closed convex set with a computable orthogonal projection."""

    dim: int

    def project(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def contains(self, x, tol: float = 1e-8) -> bool:
        """Projection fixed-point membership test with absolute tolerance."""
        x = np.asarray(x, dtype=float)
        return float(np.linalg.norm(self.project(x) - x)) <= tol

    @property
    def bounded(self) -> bool:
        return False

    def exact_diameter(self) -> float | None:
        """Diameter when known in closed form, ``inf`` if unbounded, else None."""
        return None if self.bounded else float("inf")

    def sample_box(self) -> tuple[np.ndarray, np.ndarray]:
        """A box to draw raw points from before projecting onto the set."""
        return -np.ones(self.dim), np.ones(self.dim)

    def descriptor(self) -> dict:
        raise NotImplementedError

    def _check_dim(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"expected a vector of dimension {self.dim}, got shape {x.shape}")
        return x


class WholeSpace(SimpleSet):
    def __init__(self, dim: int):
        self.dim = int(dim)

    def project(self, x):
        return self._check_dim(x)

    def contains(self, x, tol: float = 1e-8) -> bool:
        return True

    def descriptor(self):
        return {"variant": "whole_space", "dim": self.dim}


class Box(SimpleSet):
    def __init__(self, lo, hi):
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)
        if self.lo.shape != self.hi.shape or self.lo.ndim != 1:
            raise ValueError("box bounds must be 1-D vectors of equal length")
        if np.any(self.lo > self.hi):
            raise ValueError("box requires lo <= hi componentwise")
        self.dim = self.lo.size

    def project(self, x):
        return np.clip(self._check_dim(x), self.lo, self.hi)

    @property
    def bounded(self) -> bool:
        return bool(np.all(np.isfinite(self.lo)) and np.all(np.isfinite(self.hi)))

    def exact_diameter(self):
        return float(np.linalg.norm(self.hi - self.lo)) if self.bounded else float("inf")

    def sample_box(self):
        return self.lo.copy(), self.hi.copy()

    def descriptor(self):
        return {"variant": "box", "lo": self.lo.tolist(), "hi": self.hi.tolist()}


class NonnegOrthant(SimpleSet):
    def __init__(self, dim: int):
        self.dim = int(dim)

    def project(self, x):
        return np.maximum(self._check_dim(x), 0.0)

    def sample_box(self):
        return np.zeros(self.dim), np.ones(self.dim)

    def descriptor(self):
        return {"variant": "nonneg_orthant", "dim": self.dim}


class Singleton(SimpleSet):
    def __init__(self, point):
        self.point = np.asarray(point, dtype=float)
        if self.point.ndim != 1:
            raise ValueError("singleton point must be a 1-D vector")
        self.dim = self.point.size

    def project(self, x):
        self._check_dim(x)
        return self.point.copy()

    @property
    def bounded(self) -> bool:
        return True

    def exact_diameter(self):
        return 0.0

    def sample_box(self):
        return self.point.copy(), self.point.copy()

    def descriptor(self):
        return {"variant": "singleton", "point": self.point.tolist()}


class Polyhedron(SimpleSet):
    """``{x : E x <= f}``, intersected with the nonnegative orthant if ``nonneg``.

    Projection is a Dykstra cyclic scheme over the halfspaces plus the
    orthant; it stops once the per-sweep iterate change drops below ``tol``
    and the constraint residual is comparably small.
    """

    def __init__(self, E, f, nonneg: bool = True, *, feasible_point=None,
                 tol: float = 1e-12, max_sweeps: int = 10_000):
        self.E = np.atleast_2d(np.asarray(E, dtype=float))
        self.f = np.asarray(f, dtype=float)
        if self.E.shape[0] != self.f.size:
            raise ValueError("E and f row counts differ")
        self.nonneg = bool(nonneg)
        self.tol = float(tol)
        self.max_sweeps = int(max_sweeps)
        self.dim = self.E.shape[1]
        self._row_sq = np.einsum("ij,ij->i", self.E, self.E)
        if np.any(self._row_sq == 0.0):
            bad = int(np.argmin(self._row_sq))
            raise ValueError(f"constraint row {bad} of E is zero")
        if feasible_point is None:
            feasible_point, _, _ = self._dykstra(np.zeros(self.dim), min(500, self.max_sweeps))
        feasible_point = np.asarray(feasible_point, dtype=float)
        if self.violation(feasible_point) > 1e-8:
            raise ValueError("polyhedron appears empty: no feasibility point found")
        self.feasible_point = feasible_point

    def violation(self, x) -> float:
        """Largest constraint violation at ``x`` (0 when feasible)."""
        x = np.asarray(x, dtype=float)
        v = float(max(0.0, np.max(self.E @ x - self.f)))
        if self.nonneg:
            v = max(v, float(max(0.0, -np.min(x))))
        return v

    def _dykstra(self, x: np.ndarray, max_sweeps: int) -> tuple[np.ndarray, float, bool]:
        m = self.E.shape[0]
        z = x.copy()
        incr = np.zeros((m + (1 if self.nonneg else 0), self.dim))
        change = np.inf
        for _ in range(max_sweeps):
            z_prev = z.copy()
            for i in range(m):
                v = z + incr[i]
                viol = float(self.E[i] @ v) - self.f[i]
                y = v - (viol / self._row_sq[i]) * self.E[i] if viol > 0.0 else v
                incr[i] = v - y
                z = y
            if self.nonneg:
                v = z + incr[m]
                y = np.maximum(v, 0.0)
                incr[m] = v - y
                z = y
            change = float(np.max(np.abs(z - z_prev)))
            if change <= self.tol and self.violation(z) <= max(1e-9, 10.0 * self.tol):
                return z, change, True
        return z, change, False

    def project(self, x):
        x = self._check_dim(x)
        z, change, ok = self._dykstra(x, self.max_sweeps)
        if not ok:
            raise ProjectionError("polyhedral projection did not converge", change)
        return z

    def sample_box(self):
        scale = max(1.0, 2.0 * float(np.max(np.abs(self.feasible_point))))
        hi = np.full(self.dim, scale)
        lo = np.zeros(self.dim) if self.nonneg else -hi
        return lo, hi

    def descriptor(self):
        return {
            "variant": "polyhedron",
            "E": self.E.tolist(),
            "f": self.f.tolist(),
            "nonneg": self.nonneg,
        }


def set_from_descriptor(d: dict) -> SimpleSet:
    """Rebuild a SimpleSet from its JSON descriptor."""
    variant = d["variant"]
    if variant == "whole_space":
        return WholeSpace(d["dim"])
    if variant == "box":
        return Box(d["lo"], d["hi"])
    if variant == "nonneg_orthant":
        return NonnegOrthant(d["dim"])
    if variant == "singleton":
        return Singleton(d["point"])
    if variant == "polyhedron":
        return Polyhedron(d["E"], d["f"], d.get("nonneg", True))
    raise ValueError(f"unknown set variant {variant!r}")
