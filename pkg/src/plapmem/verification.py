"""Manufactured solutions, a brute-force memory-term oracle and EOC studies."""
from __future__ import annotations

import csv
import io
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import sympy as sp

from .errors import InvalidArgument, NonConvergence, UnsupportedExponent
from .memory import Kernel
from .mesh_basis import build_uniform_mesh, l2_error, l2_norm, w1p_seminorm
from .stepper import CrankNicolson, ProblemSpec, SolverOptions


@dataclass(frozen=True)
class ManufacturedCase:
    name: str
    p: float
    kernel: Kernel
    exact_u: Callable
    u_t: Callable
    plap_u: Callable
    exact_y: Callable
    f: Callable
    domain: tuple[float, float] = (0.0, 1.0)
    T: float = 1.0
    # builds the sympy expression of u(x, t); used only by the consistency check
    u_symbolic: Callable | None = field(default=None, repr=False)

    def problem(self) -> ProblemSpec:
        return ProblemSpec(self.p, self.domain, self.T,
                           lambda x: self.exact_u(x, 0.0), self.f, self.kernel)


def _memory_factor(p: float, t):
    """``int_0^t exp(-(t-s)) exp(-(p-1)s) ds``, with the p=2 limit ``t e^{-t}``."""
    t = np.asarray(t, dtype=float)
    if p == 2:
        return t * np.exp(-t)
    return np.exp(-t) * -np.expm1(-(p - 2) * t) / (p - 2)


def case_MS2(p: float) -> ManufacturedCase:
    """u = e^{-t} sin(pi x) on (0, 1) x (0, 1] with g(t) = e^{-t}."""
    if not p >= 2:
        raise UnsupportedExponent(f"MS2 needs p >= 2, got {p}")
    pi = math.pi
    shape = lambda x: np.abs(np.cos(pi * x)) ** (p - 2) * np.sin(pi * x)

    def exact_u(x, t):
        return np.exp(-t) * np.sin(pi * x)

    def u_t(x, t):
        return -exact_u(x, t)

    def plap_u(x, t):
        return -(p - 1) * pi**p * np.exp(-(p - 1) * np.asarray(t, dtype=float)) * shape(x)

    def exact_y(x, t):
        return -(p - 1) * pi**p * shape(x) * _memory_factor(p, t)

    def f(x, t):
        return u_t(x, t) - plap_u(x, t) - exact_y(x, t)

    return ManufacturedCase("MS2", p, Kernel.exp(1.0), exact_u, u_t, plap_u, exact_y, f,
                            u_symbolic=lambda x, t: sp.exp(-t) * sp.sin(sp.pi * x))


def case_MS1(p: float) -> ManufacturedCase:
    """u = e^{-t} x(1-x): quadratic in space, so P^2 represents it exactly."""
    if not p > 2:
        raise UnsupportedExponent(f"MS1 needs p > 2, got {p}")

    def exact_u(x, t):
        return np.exp(-t) * x * (1 - x)

    def u_t(x, t):
        return -exact_u(x, t)

    def plap_u(x, t):
        return -2 * (p - 1) * np.exp(-(p - 1) * np.asarray(t, dtype=float)) * np.abs(1 - 2 * x) ** (p - 2)

    def exact_y(x, t):
        return -2 * (p - 1) * np.abs(1 - 2 * x) ** (p - 2) * _memory_factor(p, t)

    def f(x, t):
        return u_t(x, t) - plap_u(x, t) - exact_y(x, t)

    return ManufacturedCase("MS1", p, Kernel.exp(1.0), exact_u, u_t, plap_u, exact_y, f,
                            u_symbolic=lambda x, t: sp.exp(-t) * x * (1 - x))


CASES: dict[str, Callable[[float], ManufacturedCase]] = {"MS1": case_MS1, "MS2": case_MS2}


def get_case(name: str, p: float) -> ManufacturedCase:
    try:
        return CASES[name](p)
    except KeyError:
        raise InvalidArgument(f"unknown case {name!r}; known: {sorted(CASES)}") from None


def brute_force_y(case: ManufacturedCase, x, t: float, resolution: int = 100_000):
    """Composite trapezoid of ``g(t-s) Delta_p u(x, s)`` over ``[0, t]``."""
    if resolution < 10:
        raise InvalidArgument(f"resolution must be >= 10, got {resolution}")
    if t == 0:
        return np.zeros_like(np.asarray(x, dtype=float))
    s = np.linspace(0.0, t, resolution + 1)
    x = np.asarray(x, dtype=float)
    vals = case.kernel.g(t - s) * case.plap_u(x[..., None], s)
    return np.trapezoid(vals, s, axis=-1)


def spot_grid(case: ManufacturedCase, n: int = 20):
    a, b = case.domain
    xs = a + (b - a) * (np.arange(n) + 0.5) / n
    ts = case.T * (np.arange(1, n + 1)) / n
    return np.meshgrid(xs, ts, indexing="ij")


def pde_residual(case: ManufacturedCase, n: int = 20) -> float:
    """Max of ``|u_t - Delta_p u - y - f|`` on an n x n grid.

    ``u_t`` and ``Delta_p u`` are rebuilt symbolically from ``u_symbolic``, so
    the hand-written closed forms of the case are checked, not reused.
    """
    if case.u_symbolic is None:
        raise InvalidArgument(f"case {case.name} has no symbolic u")
    xs, ts = sp.symbols("x t", real=True)
    u = case.u_symbolic(xs, ts)
    ux = sp.diff(u, xs)
    p = sp.nsimplify(case.p)
    lap = sp.diff(sp.Abs(ux) ** (p - 2) * ux, xs)
    ut_fn = sp.lambdify((xs, ts), sp.diff(u, ts), "numpy")
    lap_fn = sp.lambdify((xs, ts), lap, "numpy")
    X, T = spot_grid(case, n)
    res = ut_fn(X, T) - lap_fn(X, T) - case.exact_y(X, T) - case.f(X, T)
    return float(np.max(np.abs(res)))


def oracle_gap(case: ManufacturedCase, n: int = 5, resolution: int = 100_000) -> float:
    """Max ``|exact_y - brute_force_y|`` on an n x n grid."""
    X, T = spot_grid(case, n)
    gap = 0.0
    for x, t in zip(X.ravel(), T.ravel()):
        gap = max(gap, abs(float(case.exact_y(x, t)) - float(brute_force_y(case, x, t, resolution))))
    return gap


def validate_case(case: ManufacturedCase, tol: float = 1e-8) -> dict:
    """Run the consistency and oracle checks; raise if either exceeds ``tol``."""
    y0 = float(np.max(np.abs(case.exact_y(np.linspace(*case.domain, 11), 0.0))))
    a, b = case.domain
    bc = max(abs(float(case.exact_u(z, t))) for z in (a, b) for t in (0.0, case.T))
    report = {"case": case.name, "p": case.p, "pde_residual": pde_residual(case),
              "oracle_gap": oracle_gap(case), "y_at_t0": y0, "u_on_boundary": bc}
    report["passed"] = all(report[k] <= tol for k in ("pde_residual", "oracle_gap", "y_at_t0", "u_on_boundary"))
    return report


@dataclass(frozen=True)
class LevelResult:
    size: float
    m: int
    N: int
    err_u: float
    err_y: float
    max_u: float
    max_y: float
    grad_lp: float
    iterations: int
    max_iterations: int
    seconds: float


def solve_case(case: ManufacturedCase, r: int, m: int, N: int,
               opts: SolverOptions | None = None, size: float | None = None):
    """One discrete solve of ``case``; returns ``(history, LevelResult)``."""
    a, b = case.domain
    mesh, dofmap = build_uniform_mesh(a, b, m, r)
    t0 = time.perf_counter()
    stepper = CrankNicolson(case.problem(), mesh, dofmap, N, opts)
    hist = stepper.run()
    seconds = time.perf_counter() - t0
    T = case.T
    iters = [d.iterations for d in hist.diagnostics]
    grad = sum(w1p_seminorm(0.5 * (hist.U[k] + hist.U[k + 1]), case.p, mesh, dofmap) ** case.p
               for k in range(N)) * stepper.delta
    res = LevelResult(
        size=mesh.h if size is None else size, m=m, N=N,
        err_u=l2_error(hist.U[-1], case.exact_u, T, mesh, dofmap),
        err_y=l2_error(hist.Y[-1], case.exact_y, T, mesh, dofmap),
        max_u=max(l2_norm(U, mesh, dofmap) for U in hist.U),
        max_y=max(l2_norm(Y, mesh, dofmap) for Y in hist.Y),
        grad_lp=grad, iterations=sum(iters), max_iterations=max(iters), seconds=seconds)
    return hist, res


def eoc(errors: Sequence[float], sizes: Sequence[float]) -> list[float | None]:
    """``log(e_j / e_{j+1}) / log(s_j / s_{j+1})`` for adjacent pairs; first entry None."""
    out: list[float | None] = [None]
    for j in range(1, len(errors)):
        e0, e1 = errors[j - 1], errors[j]
        if e0 > 0 and e1 > 0:
            out.append(math.log(e0 / e1) / math.log(sizes[j - 1] / sizes[j]))
        else:
            out.append(float("nan"))
    return out


@dataclass
class ConvergenceTable:
    axis: str
    levels: list[LevelResult]
    case: str = ""
    p: float = float("nan")
    r: int = 0

    @property
    def sizes(self) -> list[float]:
        return [lv.size for lv in self.levels]

    @property
    def eoc_u(self):
        return eoc([lv.err_u for lv in self.levels], self.sizes)

    @property
    def eoc_y(self):
        return eoc([lv.err_y for lv in self.levels], self.sizes)

    def header(self) -> list[str]:
        return ["h" if self.axis == "space" else "delta", "err_u", "err_y", "eoc_u", "eoc_y"]

    def rows(self) -> list[list[str]]:
        fmt = lambda v: "" if v is None else repr(float(v))
        return [[fmt(lv.size), fmt(lv.err_u), fmt(lv.err_y), fmt(eu), fmt(ey)]
                for lv, eu, ey in zip(self.levels, self.eoc_u, self.eoc_y)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.header())
        writer.writerows(self.rows())
        return buf.getvalue()

    def min_eoc(self, which: str = "u") -> float:
        vals = self.eoc_u if which == "u" else self.eoc_y
        return min(v for v in vals[1:])


def _workers(workers: int | None) -> int:
    if workers is not None:
        return max(1, workers)
    try:
        return max(1, int(os.environ.get("PLAP_THREADS", "1")))
    except ValueError:
        return 1


def _run_ladder(jobs: list[tuple], case, r, opts, workers, on_level):
    def one(job):
        m, N, size = job
        try:
            return solve_case(case, r, m, N, opts, size)[1]
        except NonConvergence as exc:
            raise NonConvergence(f"level m={m}, N={N}: {exc}", increment=exc.increment,
                                 iterations=exc.iterations, level=(m, N)) from exc

    n = _workers(workers)
    if n == 1:
        results = []
        for job in jobs:
            results.append(one(job))
            if on_level:
                on_level(results[-1])
        return results
    with ThreadPoolExecutor(max_workers=n) as pool:
        results = list(pool.map(one, jobs))
    if on_level:
        for res in results:
            on_level(res)
    return results


def _strictly_increasing(values, label):
    if len(values) < 1 or any(b <= a for a, b in zip(values, values[1:])):
        raise InvalidArgument(f"{label} must be strictly increasing, got {list(values)}")


def spatial_study(case: ManufacturedCase, r: int, m_list: Sequence[int],
                  N_fine: int | Callable[[int], int], opts: SolverOptions | None = None,
                  workers: int | None = None, on_level: Callable | None = None) -> ConvergenceTable:
    """Refine in h. ``N_fine`` is a fixed step count or a function of ``m``."""
    _strictly_increasing(m_list, "m_list")
    steps = N_fine if callable(N_fine) else (lambda m: N_fine)
    a, b = case.domain
    jobs = [(m, int(steps(m)), (b - a) / m) for m in m_list]
    levels = _run_ladder(jobs, case, r, opts, workers, on_level)
    return ConvergenceTable("space", levels, case.name, case.p, r)


def temporal_study(case: ManufacturedCase, r: int, m_fine: int, N_list: Sequence[int],
                   opts: SolverOptions | None = None, workers: int | None = None,
                   on_level: Callable | None = None) -> ConvergenceTable:
    _strictly_increasing(N_list, "N_list")
    jobs = [(m_fine, N, case.T / N) for N in N_list]
    levels = _run_ladder(jobs, case, r, opts, workers, on_level)
    return ConvergenceTable("time", levels, case.name, case.p, r)
