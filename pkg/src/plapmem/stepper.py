"""Crank-Nicolson time stepping for the coupled (U, Y) system.

Per step the Volterra equation is linear in ``U^(k+1)``:
``Y^(k+1) = alpha * U^(k+1) + beta`` with a scalar ``alpha``. The outer
nonlinear iteration therefore only runs on ``U``, with ``Y`` eliminated
exactly in every iterate.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .assembly import (BandedSpdMatrix, assemble_load, assemble_mass, frozen_stiffness,
                       plap_jacobian, plap_residual)
from .errors import InadmissibleStep, InvalidArgument, MissingHistory, NonConvergence
from .memory import History, Kernel, eval_If, eval_Qg, eval_Qgprime
from .mesh_basis import DofMap, Mesh1D, interpolate

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ProblemSpec:
    p: float
    domain: tuple[float, float]
    T: float
    u0: Callable
    f: Callable
    kernel: Kernel

    def __post_init__(self):
        if not (math.isfinite(self.p) and self.p >= 2):
            raise InvalidArgument(f"p must satisfy p >= 2, got {self.p}")
        if not self.T > 0:
            raise InvalidArgument(f"T must be positive, got {self.T}")
        a, b = self.domain
        ua, ub = (float(np.asarray(self.u0(np.array([z])))[0]) for z in (a, b))
        if abs(ua) > 1e-12 or abs(ub) > 1e-12:
            raise InvalidArgument(f"u0 must vanish on the boundary, got u0(a)={ua}, u0(b)={ub}")


@dataclass(frozen=True)
class SolverOptions:
    """Nonlinear solver settings.

    ``relaxation=None`` selects ``2/p``: the frozen-coefficient map has
    Jacobian eigenvalues in ``(-(p-2), 0]``, and ``2/p`` is the damping that
    contracts the whole interval at rate ``(p-2)/p``. It equals 1 at p=2.
    """

    method: str = "picard"
    tol: float = 1e-10
    max_iter: int = 100
    relaxation: float | None = None
    eps_reg: float | None = None

    def __post_init__(self):
        if self.method not in ("picard", "newton"):
            raise InvalidArgument(f"method must be 'picard' or 'newton', got {self.method!r}")
        if not self.tol > 0:
            raise InvalidArgument(f"tol must be positive, got {self.tol}")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise InvalidArgument(f"max_iter must be >= 1, got {self.max_iter}")
        if self.relaxation is not None and not 0 < self.relaxation <= 1:
            raise InvalidArgument(f"relaxation must be in (0, 1], got {self.relaxation}")
        if self.eps_reg is not None and self.eps_reg < 0:
            raise InvalidArgument(f"eps_reg must be >= 0, got {self.eps_reg}")

    def omega(self, p: float) -> float:
        if self.relaxation is not None:
            return self.relaxation
        return 2.0 / p if self.method == "picard" else 1.0

    def regularization(self) -> float:
        if self.eps_reg is not None:
            return self.eps_reg
        return 1e-12 if self.method == "newton" else 0.0


@dataclass(frozen=True)
class StepDiagnostics:
    iterations: int
    increment: float
    y_residual: float
    admissibility: float
    residual: float = float("nan")


def check_delta_admissible(kernel: Kernel, delta: float) -> float:
    """Coefficient of ``M Y^(k+1)`` in the discrete Volterra equation.

    Equals ``1/2 + delta*g(0)/8``; positive for every delta when g(0) >= 0
    and for ``delta < -4/g(0)`` otherwise.
    """
    if not delta > 0:
        raise InvalidArgument(f"delta must be positive, got {delta}")
    coeff = 0.5 + delta * kernel.g0 / 8.0
    if coeff <= 0:
        bound = -4.0 / kernel.g0
        raise InadmissibleStep(
            f"time step delta={delta:g} is inadmissible for g(0)={kernel.g0:g}: "
            f"need delta < -4/g(0) = {bound:g}",
            delta=delta, g0=kernel.g0, bound=bound)
    return coeff


class CrankNicolson:
    """Stepper bound to one problem and one discretization.

    Caches the mass factorization, the interpolated initial state and the
    load vectors at every node and midpoint time.
    """

    def __init__(self, problem: ProblemSpec, mesh: Mesh1D, dofmap: DofMap, N: int,
                 opts: SolverOptions | None = None):
        if isinstance(N, bool) or int(N) != N or N < 1:
            raise InvalidArgument(f"step count N must be >= 1, got {N!r}")
        self.problem = problem
        self.mesh = mesh
        self.dofmap = dofmap
        self.N = int(N)
        self.delta = problem.T / self.N
        self.opts = opts or SolverOptions()
        self.coeff = check_delta_admissible(problem.kernel, self.delta)
        problem.kernel.check_bounded(problem.T, self.delta)
        self.M = assemble_mass(mesh, dofmap)
        self.M_chol = self.M.cholesky()
        self.u0h = interpolate(problem.u0, mesh, dofmap)
        self._loads: dict[float, np.ndarray] = {}

    def load(self, t: float) -> np.ndarray:
        F = self._loads.get(t)
        if F is None:
            F = self._loads[t] = assemble_load(self.problem.f, t, self.mesh, self.dofmap)
        return F

    def mass_norm(self, v) -> float:
        return math.sqrt(max(float(v @ self.M.matvec(v)), 0.0))

    def new_history(self) -> History:
        return History(self.delta, self.u0h)

    # -- Volterra part -------------------------------------------------

    def _y_parts(self, hist: History, k: int):
        """Split ``Y^(k+1)(U) = alpha*U + beta``; also return the rhs pieces for residuals."""
        if len(hist) < k + 1:
            raise MissingHistory(f"history must hold entries 0..{k}, has {len(hist)}")
        kern, d = self.problem.kernel, self.delta
        zero = np.zeros(hist.n_dof)
        t_half = (k + 0.5) * d
        w = (-0.5 * hist.Y[k]
             - eval_Qg(hist, kern, k, Y_next=zero)
             + 0.5 * kern.g0 * hist.U[k]
             - float(kern.g(t_half)) * self.u0h
             + eval_Qgprime(hist, kern, k, U_next=zero))
        I_f = eval_If(self.problem.f, kern, k, d, self.mesh, self.dofmap, loads=self.load)
        alpha_num = 0.5 * kern.g0 + 0.125 * d * float(kern.g_prime(0.0))
        alpha = alpha_num / self.coeff
        beta = (w - self.M_chol.solve(I_f)) / self.coeff
        return alpha, beta, w, I_f, alpha_num

    def solve_Y(self, U_next, hist: History, k: int) -> np.ndarray:
        alpha, beta, *_ = self._y_parts(hist, k)
        return alpha * np.asarray(U_next, dtype=float) + beta

    def y_residual(self, Y, U_next, parts) -> float:
        _, _, w, I_f, alpha_num = parts
        rhs = self.M.matvec(w + alpha_num * U_next) - I_f
        return float(np.linalg.norm(self.coeff * self.M.matvec(Y) - rhs))

    # -- one step --------------------------------------------------------

    def residual(self, U, hist: History, k: int, Y=None) -> np.ndarray:
        """Crank-Nicolson residual of the u-equation at t_{k+1/2}."""
        p, d = self.problem.p, self.delta
        Uk, Yk = hist.U[k], hist.Y[k]
        if Y is None:
            Y = self.solve_Y(U, hist, k)
        ubar = 0.5 * (U + Uk)
        return (self.M.matvec((U - Uk) / d - 0.5 * (Y + Yk))
                + plap_residual(ubar, p, self.mesh, self.dofmap)
                - self.load((k + 0.5) * d))

    def step(self, hist: History, k: int):
        """Advance from ``t_k`` to ``t_{k+1}``; returns ``(U, Y, StepDiagnostics)``."""
        p, d, opts = self.problem.p, self.delta, self.opts
        parts = self._y_parts(hist, k)
        alpha, beta = parts[0], parts[1]
        Uk, Yk = hist.U[k], hist.Y[k]
        F = self.load((k + 0.5) * d)
        M = self.M
        # alpha*U moves to the left: (1/d - alpha/2) M U + ...
        M_eff = M.scaled(1.0 / d - 0.5 * alpha)
        b0 = M.matvec(Uk / d + 0.5 * (beta + Yk)) + F
        omega = opts.omega(p)
        eps = opts.regularization()
        linear = p == 2 and opts.method == "picard" and omega == 1.0

        U = Uk.copy()
        incr = res_prev = math.inf
        it = 0
        while it < opts.max_iter:
            it += 1
            ubar = 0.5 * (U + Uk)
            if opts.method == "picard":
                K = frozen_stiffness(ubar, p, eps, self.mesh, self.dofmap)
                A = M_eff + K.scaled(0.5)
                U_new = A.cholesky().solve(b0 - 0.5 * K.matvec(Uk))
                delta_U = U_new - U
            else:
                R = (M_eff.matvec(U) - b0
                     + plap_residual(ubar, p, self.mesh, self.dofmap))
                J = plap_jacobian(ubar, p, eps, self.mesh, self.dofmap)
                delta_U = -(M_eff + J.scaled(0.5)).cholesky().solve(R)
            U = U + omega * delta_U
            incr = self.mass_norm(omega * delta_U)
            if linear:
                break
            if incr <= opts.tol:
                # keep polishing while the residual is above 10*tol and still
                # falling fast; below that it has reached its roundoff floor
                res = self._residual_norm(U, hist, k, alpha * U + beta)
                if res <= 10 * opts.tol or res > 0.5 * res_prev:
                    break
                res_prev = res
        else:
            raise NonConvergence(
                f"step {k}: nonlinear iteration did not converge in {opts.max_iter} "
                f"iterations (last increment {incr:.3e})", increment=incr, iterations=it)

        Y = alpha * U + beta
        diag = StepDiagnostics(it, incr, self.y_residual(Y, U, parts), self.coeff,
                               self._residual_norm(U, hist, k, Y))
        return U, Y, diag

    def _residual_norm(self, U, hist: History, k: int, Y) -> float:
        return self.mass_norm(self.M_chol.solve(self.residual(U, hist, k, Y)))

    def run(self, hist: History | None = None, callback: Callable | None = None) -> History:
        hist = hist if hist is not None else self.new_history()
        for k in range(len(hist) - 1, self.N):
            U, Y, diag = self.step(hist, k)
            hist.append(U, Y)
            hist.diagnostics.append(diag)
            if callback is not None:
                callback(k, hist, diag)
        log.debug("run finished: N=%d, total iterations=%d", self.N,
                  sum(dg.iterations for dg in hist.diagnostics))
        return hist


def solve_Y(U_next, hist: History, k: int, problem: ProblemSpec, mesh: Mesh1D, dofmap: DofMap,
            N: int | None = None) -> np.ndarray:
    """Y^(k+1) from the discrete Volterra equation for a given U^(k+1)."""
    N = N if N is not None else int(round(problem.T / hist.delta))
    return CrankNicolson(problem, mesh, dofmap, N).solve_Y(U_next, hist, k)


def step(hist: History, k: int, problem: ProblemSpec, mesh: Mesh1D, dofmap: DofMap,
         opts: SolverOptions | None = None, N: int | None = None):
    N = N if N is not None else int(round(problem.T / hist.delta))
    return CrankNicolson(problem, mesh, dofmap, N, opts).step(hist, k)


def run(problem: ProblemSpec, mesh: Mesh1D, dofmap: DofMap, N: int,
        opts: SolverOptions | None = None, callback: Callable | None = None) -> History:
    """Full trajectory ``t_0 .. t_N`` with ``U^(0) = interpolant of u0`` and ``Y^(0) = 0``."""
    return CrankNicolson(problem, mesh, dofmap, N, opts).run(callback=callback)
