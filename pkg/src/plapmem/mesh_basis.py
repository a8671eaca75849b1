"""Uniform 1D meshes, Lagrange reference elements, Gauss rules and L2 norms.

Coefficient vectors always hold the *interior* nodal values only; the two
endpoint nodes carry the homogeneous Dirichlet condition and are never
unknowns.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

from .errors import InvalidArgument, InvalidInput

MAX_DEGREE = 4
MAX_GAUSS_POINTS = 16


@dataclass(frozen=True)
class Mesh1D:
    a: float
    b: float
    m: int

    @property
    def h(self) -> float:
        return (self.b - self.a) / self.m

    @property
    def vertices(self) -> np.ndarray:
        return self.a + self.h * np.arange(self.m + 1)

    def element_bounds(self, j: int) -> tuple[float, float]:
        return self.a + j * self.h, self.a + (j + 1) * self.h


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Legendre rule on the reference interval [0, 1]."""

    q: int
    points: np.ndarray
    weights: np.ndarray


@lru_cache(maxsize=None)
def _gauss(q: int) -> QuadratureRule:
    xi, w = np.polynomial.legendre.leggauss(q)
    pts = 0.5 * (xi + 1.0)
    wts = 0.5 * w
    pts.flags.writeable = False
    wts.flags.writeable = False
    return QuadratureRule(q, pts, wts)


def gauss_rule(q: int) -> QuadratureRule:
    """Return the ``q``-point Gauss rule on [0, 1], exact for degree ``2q - 1``."""
    if isinstance(q, bool) or int(q) != q or not 1 <= q <= MAX_GAUSS_POINTS:
        raise InvalidArgument(f"Gauss point count must be in [1, {MAX_GAUSS_POINTS}], got {q!r}")
    return _gauss(int(q))


@dataclass(frozen=True)
class ReferenceElement:
    """Lagrange element of degree ``r`` with equispaced nodes on [0, 1]."""

    r: int
    nodes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if isinstance(self.r, bool) or int(self.r) != self.r or not 1 <= self.r <= MAX_DEGREE:
            raise InvalidArgument(f"degree r must be in [1, {MAX_DEGREE}], got {self.r!r}")
        nodes = np.linspace(0.0, 1.0, self.r + 1)
        nodes.flags.writeable = False
        object.__setattr__(self, "nodes", nodes)

    def tabulate(self, xi) -> tuple[np.ndarray, np.ndarray]:
        """Shape values and d/dxi derivatives at ``xi``, each shaped (len(xi), r+1)."""
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        n = self.r + 1
        diff = xi[:, None] - self.nodes[None, :]
        phi = np.empty((xi.size, n))
        dphi = np.zeros((xi.size, n))
        for i in range(n):
            others = [j for j in range(n) if j != i]
            denom = np.prod([self.nodes[i] - self.nodes[j] for j in others])
            phi[:, i] = np.prod(diff[:, others], axis=1) / denom
            for k in others:
                rest = [j for j in others if j != k]
                term = np.prod(diff[:, rest], axis=1) if rest else np.ones(xi.size)
                dphi[:, i] += term
            dphi[:, i] /= denom
        return phi, dphi


@dataclass(frozen=True)
class DofMap:
    """Global numbering for continuous P^r on a uniform mesh.

    Full nodes are numbered left to right, ``0 .. m*r``; element ``e`` owns
    full nodes ``e*r .. e*r + r``. Interior unknown ``i`` is full node ``i+1``.
    """

    m: int
    r: int
    cells: np.ndarray = field(init=False, repr=False)
    boundary: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        cells = self.r * np.arange(self.m)[:, None] + np.arange(self.r + 1)[None, :]
        boundary = np.zeros(self.n_full, dtype=bool)
        boundary[[0, -1]] = True
        cells.flags.writeable = False
        boundary.flags.writeable = False
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "boundary", boundary)

    @property
    def n_full(self) -> int:
        return self.m * self.r + 1

    @property
    def n_dof(self) -> int:
        return self.m * self.r - 1

    def to_full(self, coeffs) -> np.ndarray:
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (self.n_dof,):
            raise InvalidArgument(f"expected {self.n_dof} coefficients, got shape {coeffs.shape}")
        full = np.zeros(self.n_full)
        full[1:-1] = coeffs
        return full

    def node_coordinates(self, mesh: Mesh1D) -> np.ndarray:
        """Coordinates of all full nodes (including both endpoints)."""
        return mesh.a + (mesh.h / self.r) * np.arange(self.n_full)


def build_uniform_mesh(a: float, b: float, m: int, r: int) -> tuple[Mesh1D, DofMap]:
    if not (math.isfinite(a) and math.isfinite(b)):
        raise InvalidArgument(f"endpoints must be finite, got ({a}, {b})")
    if not a < b:
        raise InvalidArgument(f"need a < b, got ({a}, {b})")
    if isinstance(m, bool) or int(m) != m or m < 1:
        raise InvalidArgument(f"element count m must be >= 1, got {m!r}")
    if isinstance(r, bool) or int(r) != r or not 1 <= r <= MAX_DEGREE:
        raise InvalidArgument(f"degree r must be in [1, {MAX_DEGREE}], got {r!r}")
    return Mesh1D(float(a), float(b), int(m)), DofMap(int(m), int(r))


def default_quadrature(r: int) -> QuadratureRule:
    return gauss_rule(r + 3)


@dataclass(frozen=True)
class ElementTables:
    """Quadrature points and shape tables shared by every element of a mesh."""

    x: np.ndarray       # (m, q) physical quadrature points
    jw: np.ndarray      # (q,) weights times Jacobian h
    phi: np.ndarray     # (q, r+1)
    dphi: np.ndarray    # (q, r+1) physical derivatives d/dx


@lru_cache(maxsize=64)
def element_tables(mesh: Mesh1D, r: int, q: int | None = None) -> ElementTables:
    rule = default_quadrature(r) if q is None else gauss_rule(q)
    phi, dphi = ReferenceElement(r).tabulate(rule.points)
    left = mesh.a + mesh.h * np.arange(mesh.m)
    x = left[:, None] + mesh.h * rule.points[None, :]
    tables = ElementTables(x, mesh.h * rule.weights, phi, dphi / mesh.h)
    for arr in (tables.x, tables.jw, tables.phi, tables.dphi):
        arr.flags.writeable = False
    return tables


def _sample(func: Callable, x: np.ndarray, *args) -> np.ndarray:
    vals = np.asarray(func(x, *args), dtype=float)
    vals = np.broadcast_to(vals, x.shape)
    if not np.all(np.isfinite(vals)):
        raise InvalidInput("field produced a non-finite value at a sample point")
    return vals


def interpolate(func: Callable, mesh: Mesh1D, dofmap: DofMap) -> np.ndarray:
    """Nodal interpolant of ``func(x)`` into the interior coefficient space."""
    x = dofmap.node_coordinates(mesh)[1:-1]
    return np.array(_sample(func, x), dtype=float)


def evaluate(coeffs, mesh: Mesh1D, dofmap: DofMap, x) -> np.ndarray:
    """Point values of the finite element function at arbitrary ``x`` in [a, b]."""
    full = dofmap.to_full(coeffs)
    x = np.asarray(x, dtype=float)
    s = (np.atleast_1d(x).ravel() - mesh.a) / mesh.h
    e = np.clip(np.floor(s).astype(int), 0, mesh.m - 1)
    phi, _ = ReferenceElement(dofmap.r).tabulate(s - e)
    vals = np.sum(full[dofmap.cells[e]] * phi, axis=1)
    return vals.reshape(x.shape) if x.ndim else vals


def element_values(coeffs, mesh: Mesh1D, dofmap: DofMap, q: int | None = None):
    """Values and derivatives of the FE function at every quadrature point, (m, q)."""
    tab = element_tables(mesh, dofmap.r, q)
    local = dofmap.to_full(coeffs)[dofmap.cells]
    return local @ tab.phi.T, local @ tab.dphi.T


def l2_norm(coeffs, mesh: Mesh1D, dofmap: DofMap, q: int | None = None) -> float:
    vals, _ = element_values(coeffs, mesh, dofmap, q)
    tab = element_tables(mesh, dofmap.r, q)
    return math.sqrt(float(np.sum(vals**2 @ tab.jw)))


def l2_error(coeffs, exact: Callable, t: float, mesh: Mesh1D, dofmap: DofMap,
             q: int | None = None) -> float:
    """``||u_h - exact(., t)||`` in L2(a, b)."""
    vals, _ = element_values(coeffs, mesh, dofmap, q)
    tab = element_tables(mesh, dofmap.r, q)
    ref = _sample(exact, tab.x, t)
    return math.sqrt(float(np.sum((vals - ref) ** 2 @ tab.jw)))


def w1p_seminorm(coeffs, p: float, mesh: Mesh1D, dofmap: DofMap) -> float:
    """``(integral |u_h'|^p)^(1/p)``."""
    _, dvals = element_values(coeffs, mesh, dofmap)
    tab = element_tables(mesh, dofmap.r)
    return float(np.sum(np.abs(dvals) ** p @ tab.jw)) ** (1.0 / p)
