"""Matrix and vector assembly for continuous P^r on a 1D mesh.

Symmetric banded matrices are kept in LAPACK upper storage
(``ab[bw + i - j, j] = A[i, j]`` for ``i <= j``) so that Cholesky solves go
straight to ``scipy.linalg.cholesky_banded``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import LinAlgError, cho_solve_banded, cholesky_banded

from .errors import InvalidArgument, NotPositiveDefinite, UnsupportedExponent
from .mesh_basis import DofMap, Mesh1D, _sample, element_tables, element_values


@dataclass(frozen=True)
class BandedSpdMatrix:
    ab: np.ndarray

    @property
    def bandwidth(self) -> int:
        return self.ab.shape[0] - 1

    @property
    def n(self) -> int:
        return self.ab.shape[1]

    def to_dense(self) -> np.ndarray:
        bw, n = self.bandwidth, self.n
        A = np.zeros((n, n))
        for d in range(bw + 1):
            diag = self.ab[bw - d, d:]
            A[np.arange(n - d), np.arange(d, n)] = diag
            A[np.arange(d, n), np.arange(n - d)] = diag
        return A

    def matvec(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        bw = self.bandwidth
        y = self.ab[bw] * x
        for d in range(1, bw + 1):
            band = self.ab[bw - d, d:]
            y[:-d] += band * x[d:]
            y[d:] += band * x[:-d]
        return y

    __matmul__ = matvec

    def __add__(self, other: "BandedSpdMatrix") -> "BandedSpdMatrix":
        return BandedSpdMatrix(self.ab + other.ab)

    def scaled(self, alpha: float) -> "BandedSpdMatrix":
        return BandedSpdMatrix(alpha * self.ab)

    def cholesky(self) -> "CholeskyFactor":
        try:
            cb = cholesky_banded(self.ab, lower=False, check_finite=True)
        except LinAlgError as exc:
            raise NotPositiveDefinite(str(exc)) from None
        return CholeskyFactor(cb)


@dataclass(frozen=True)
class CholeskyFactor:
    cb: np.ndarray

    def solve(self, b) -> np.ndarray:
        return cho_solve_banded((self.cb, False), np.asarray(b, dtype=float), check_finite=False)


def solve_spd(A: BandedSpdMatrix, b) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    if b.shape != (A.n,):
        raise InvalidArgument(f"right-hand side has shape {b.shape}, expected ({A.n},)")
    return A.cholesky().solve(b)


def _banded_from_elements(Ke: np.ndarray, dofmap: DofMap) -> BandedSpdMatrix:
    """Scatter element matrices (m, r+1, r+1) into interior banded storage."""
    r = dofmap.r
    ab = np.zeros((r + 1, dofmap.n_full))
    cols = dofmap.cells
    for a in range(r + 1):
        for b in range(a, r + 1):
            # np.add.at accumulates in element order: bit-reproducible
            np.add.at(ab[r - (b - a)], cols[:, b], Ke[:, a, b])
    ab = ab[:, 1:-1].copy()
    for d in range(1, r + 1):
        ab[r - d, :d] = 0.0
    return BandedSpdMatrix(ab)


def _vector_from_elements(Fe: np.ndarray, dofmap: DofMap) -> np.ndarray:
    full = np.zeros(dofmap.n_full)
    np.add.at(full, dofmap.cells, Fe)
    return full[1:-1]


def _check_exponent(p: float) -> None:
    if not np.isfinite(p) or p < 2:
        raise UnsupportedExponent(f"exponent p must satisfy p >= 2, got {p}")


def assemble_mass(mesh: Mesh1D, dofmap: DofMap) -> BandedSpdMatrix:
    tab = element_tables(mesh, dofmap.r)
    Ke = np.einsum("q,qa,qb->ab", tab.jw, tab.phi, tab.phi)
    return _banded_from_elements(np.broadcast_to(Ke, (mesh.m,) + Ke.shape), dofmap)


def _weighted_stiffness(coef: np.ndarray, mesh: Mesh1D, dofmap: DofMap) -> BandedSpdMatrix:
    tab = element_tables(mesh, dofmap.r)
    Ke = np.einsum("eq,q,qa,qb->eab", coef, tab.jw, tab.dphi, tab.dphi)
    return _banded_from_elements(Ke, dofmap)


def plap_residual(u, p: float, mesh: Mesh1D, dofmap: DofMap) -> np.ndarray:
    """Component i: integral of ``|u_h'|^(p-2) u_h' phi_i'``."""
    _check_exponent(p)
    _, du = element_values(u, mesh, dofmap)
    tab = element_tables(mesh, dofmap.r)
    flux = np.abs(du) ** (p - 2) * du
    Fe = (flux * tab.jw) @ tab.dphi
    return _vector_from_elements(Fe, dofmap)


def frozen_stiffness(w, p: float, eps_reg: float, mesh: Mesh1D, dofmap: DofMap) -> BandedSpdMatrix:
    """Stiffness with coefficient ``(|w_h'|^2 + eps_reg)^((p-2)/2)`` frozen at ``w``."""
    _check_exponent(p)
    if eps_reg < 0:
        raise InvalidArgument(f"eps_reg must be >= 0, got {eps_reg}")
    _, dw = element_values(w, mesh, dofmap)
    coef = (dw**2 + eps_reg) ** ((p - 2) / 2)
    return _weighted_stiffness(coef, mesh, dofmap)


def plap_jacobian(w, p: float, eps_reg: float, mesh: Mesh1D, dofmap: DofMap) -> BandedSpdMatrix:
    """Derivative of :func:`plap_residual` at ``w`` (coefficient ``(p-1)|w'|^(p-2)``)."""
    _check_exponent(p)
    _, dw = element_values(w, mesh, dofmap)
    coef = (p - 1) * (dw**2 + eps_reg) ** ((p - 2) / 2)
    return _weighted_stiffness(coef, mesh, dofmap)


def assemble_load(func: Callable, t: float, mesh: Mesh1D, dofmap: DofMap) -> np.ndarray:
    """Component i: integral of ``func(x, t) phi_i``."""
    tab = element_tables(mesh, dofmap.r)
    vals = _sample(func, tab.x, t)
    Fe = (vals * tab.jw) @ tab.phi
    return _vector_from_elements(Fe, dofmap)
