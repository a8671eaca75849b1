"""Memory kernels, discrete trajectories and the half-step convolution rules.

Every history integral is taken over ``[0, t_{k+1/2}]``: a composite
trapezoid on ``[0, t_k]`` followed by one trapezoid panel on
``[t_k, t_{k+1/2}]`` whose right end value is the average of the samples at
``t_k`` and ``t_{k+1}``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .assembly import assemble_load
from .errors import InvalidArgument, MissingHistory
from .mesh_basis import DofMap, Mesh1D


@dataclass(frozen=True)
class Kernel:
    g: Callable
    g_prime: Callable
    g0: float
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        val = float(np.asarray(self.g(0.0)))
        if not math.isclose(val, self.g0, rel_tol=1e-12, abs_tol=1e-12):
            raise InvalidArgument(f"g0={self.g0} disagrees with g(0)={val}")

    @classmethod
    def exp(cls, a: float = 1.0) -> "Kernel":
        """``g(t) = exp(-a t)``."""
        return cls(lambda t: np.exp(-a * np.asarray(t, dtype=float)),
                   lambda t: -a * np.exp(-a * np.asarray(t, dtype=float)),
                   1.0, "exp", {"a": a})

    @classmethod
    def const(cls, c: float) -> "Kernel":
        return cls(lambda t: np.full(np.shape(t), float(c)),
                   lambda t: np.zeros(np.shape(t)),
                   float(c), "const", {"c": c})

    @classmethod
    def poly(cls, coeffs: Sequence[float]) -> "Kernel":
        """``g(t) = sum coeffs[i] t**i``."""
        P = np.polynomial.Polynomial(np.asarray(coeffs, dtype=float))
        dP = P.deriv()
        return cls(lambda t: P(np.asarray(t, dtype=float)),
                   lambda t: dP(np.asarray(t, dtype=float)) + 0.0 * np.asarray(t, dtype=float),
                   float(P(0.0)), "poly", {"coeffs": [float(c) for c in coeffs]})

    def check_bounded(self, T: float, delta: float) -> None:
        """Spot-check g and g' at every step midpoint and at 0."""
        n = max(1, int(round(T / delta)))
        ts = np.concatenate([[0.0], (np.arange(n) + 0.5) * delta])
        for fn, label in ((self.g, "g"), (self.g_prime, "g'")):
            vals = np.asarray(fn(ts), dtype=float)
            if not np.all(np.isfinite(vals)):
                raise InvalidArgument(f"kernel {label} is not finite on [0, {T}]")


class History:
    """Append-only trajectory ``(U^(j), Y^(j))`` at ``t_j = j * delta``."""

    def __init__(self, delta: float, U0, Y0=None):
        if not delta > 0:
            raise InvalidArgument(f"delta must be positive, got {delta}")
        self.delta = float(delta)
        U0 = np.array(U0, dtype=float)
        Y0 = np.zeros_like(U0) if Y0 is None else np.array(Y0, dtype=float)
        if Y0.shape != U0.shape:
            raise InvalidArgument("U0 and Y0 must have the same shape")
        self.U: list[np.ndarray] = [U0]
        self.Y: list[np.ndarray] = [Y0]
        self.diagnostics: list = []

    def __len__(self) -> int:
        return len(self.U)

    @property
    def n_dof(self) -> int:
        return self.U[0].size

    def t(self, j: int) -> float:
        return j * self.delta

    def append(self, U, Y) -> None:
        U = np.array(U, dtype=float)
        Y = np.array(Y, dtype=float)
        if U.shape != self.U[0].shape or Y.shape != self.U[0].shape:
            raise InvalidArgument("history entries must all have the same length")
        self.U.append(U)
        self.Y.append(Y)


@dataclass(frozen=True)
class QuadWeights:
    """(node index, kernel argument, weight) triples for one evaluation at t_{k+1/2}."""

    nodes: np.ndarray
    args: np.ndarray
    weights: np.ndarray

    def __iter__(self):
        return iter(zip(self.nodes.tolist(), self.args.tolist(), self.weights.tolist()))


def quad_weights(k: int, delta: float) -> QuadWeights:
    if k < 0 or not delta > 0:
        raise InvalidArgument(f"need k >= 0 and delta > 0, got k={k}, delta={delta}")
    t_half = (k + 0.5) * delta
    if k == 0:
        nodes = [0, 0, 1]
        args = [0.5 * delta, 0.0, 0.0]
        weights = [0.25 * delta, 0.125 * delta, 0.125 * delta]
    else:
        inner = np.arange(1, k)
        nodes = [0, *inner.tolist(), k, k, k + 1]
        args = [t_half, *(t_half - inner * delta).tolist(), 0.5 * delta, 0.0, 0.0]
        weights = [0.5 * delta, *([delta] * (k - 1)), 0.75 * delta, 0.125 * delta, 0.125 * delta]
    return QuadWeights(np.array(nodes), np.array(args, dtype=float), np.array(weights, dtype=float))


def _convolve(series: list, fn: Callable, k: int, delta: float, current, label: str) -> np.ndarray:
    qw = quad_weights(k, delta)
    if len(series) < k + 1:
        raise MissingHistory(f"{label}: need entries 0..{k}, history has {len(series)}")
    if current is None:
        if len(series) < k + 2:
            raise MissingHistory(f"{label}: entry {k + 1} neither stored nor supplied")
        current = series[k + 1]
    c = qw.weights * np.asarray(fn(qw.args), dtype=float)
    past = qw.nodes <= k
    stack = np.stack([series[j] for j in qw.nodes[past]])
    return c[past] @ stack + c[~past].sum() * np.asarray(current, dtype=float)


def eval_Qg(hist: History, kernel: Kernel, k: int, Y_next=None) -> np.ndarray:
    """Trapezoid approximation of the g-convolution of Y at t_{k+1/2}.

    The ``k+1`` sample is ``Y_next`` when given, else ``hist.Y[k+1]``.
    """
    return _convolve(hist.Y, kernel.g, k, hist.delta, Y_next, "Q_g")


def eval_Qgprime(hist: History, kernel: Kernel, k: int, U_next=None) -> np.ndarray:
    """Trapezoid approximation of the g'-convolution of U at t_{k+1/2}."""
    return _convolve(hist.U, kernel.g_prime, k, hist.delta, U_next, "Q_g'")


def if_weights(k: int, delta: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Node times, kernel arguments and weights for the forcing convolution.

    Unlike :func:`quad_weights` the right end of the last half panel is the
    exact midpoint time ``t_{k+1/2}``.
    """
    t_half = (k + 0.5) * delta
    if k == 0:
        times = np.array([0.0, t_half])
        args = np.array([0.5 * delta, 0.0])
        weights = np.array([0.25 * delta, 0.25 * delta])
        return times, args, weights
    j = np.arange(k + 1)
    times = np.append(j * delta, t_half)
    args = t_half - times
    weights = np.full(k + 2, delta)
    weights[0] = 0.5 * delta
    weights[k] = 0.75 * delta
    weights[k + 1] = 0.25 * delta
    return times, args, weights


def eval_If(f: Callable, kernel: Kernel, k: int, delta: float, mesh: Mesh1D, dofmap: DofMap,
            loads: Callable | None = None) -> np.ndarray:
    """Load-vector form of the g-convolution of the forcing at t_{k+1/2}.

    ``loads(t)`` may supply cached load vectors; by default they are assembled.
    """
    times, args, weights = if_weights(k, delta)
    load = loads if loads is not None else (lambda s: assemble_load(f, s, mesh, dofmap))
    c = weights * np.asarray(kernel.g(args), dtype=float)
    return c @ np.stack([load(s) for s in times])
