"""Brute-force cross-checks for the closed-form generators.

Two routes that share nothing with :mod:`delaycontrol.optimal` beyond the
state-only pieces ``phi_s``:

* the discretized energy minimization solved as a dense KKT saddle system;
* the second-kind Volterra equation satisfied by the optimal generator,
  solved by forward substitution, with its free constant found by a two-point
  secant on the moment condition.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from .admissible import (
    MomentConstraints,
    feedback_tail,
    moment_constraints,
    system_feedback_tail,
    system_moment_constraints,
)
from .core import DelayEquation, GridFunction, InitialState, RetardedSystem, trapezoid_weights
from .exceptions import DegenerateMomentSystem

__all__ = [
    "QuadraticProgram",
    "scalar_program",
    "system_program",
    "pure_moment_program",
    "kkt_solve",
    "convolution_matrix",
    "volterra_solve",
    "constant_search",
    "volterra_problem",
    "volterra_generator",
]


@dataclass(frozen=True, eq=False)
class QuadraticProgram:
    """Minimize ``|u|_w^2 + sum_s |phi_s + K_s u|_w^2`` subject to the moments.

    ``hessian`` and ``gradient`` hold the assembled quadratic form
    ``u' H u + 2 g' u`` (constant part dropped).
    """

    grid: GridFunction
    hessian: np.ndarray
    gradient: np.ndarray
    constraints: MomentConstraints
    constant: float = 0.0

    @property
    def dim(self) -> int:
        return self.grid.M + 1

    @property
    def weight(self) -> np.ndarray:
        return self.grid.weights()

    def objective(self, u: np.ndarray) -> float:
        return float(u @ self.hessian @ u + 2 * self.gradient @ u + self.constant)


def convolution_matrix(kernel: np.ndarray, h: float) -> np.ndarray:
    """Lower-triangular ``C`` with ``(C u)_i = trapezoid int_0^{t_i} k(t_i - s) u(s) ds``."""
    n = len(kernel)
    i, j = np.indices((n, n))
    C = np.where(j <= i, kernel[np.clip(i - j, 0, n - 1)], 0.0) * h
    C[:, 0] *= 0.5
    C[np.arange(n), np.arange(n)] *= 0.5
    C[0, 0] = 0.0
    return C


def _program(grid, W, ops, cons) -> QuadraticProgram:
    """Assemble from ``ops = [(phi_samples, K_matrix), ...]``."""
    n = grid.M + 1
    H = np.diag(W).astype(float)
    g = np.zeros(n)
    const = 0.0
    for phi, K in ops:
        WK = W[:, None] * K
        H += K.T @ WK
        g += WK.T @ phi
        const += float(phi @ (W * phi))
    return QuadraticProgram(grid, H, g, cons, const)


def scalar_program(eq: DelayEquation, state: InitialState, epsilon: float) -> QuadraticProgram:
    """Energy of ``u0`` plus the ``phi`` pieces, whose generator response is ``d_s u0 + b_s C u0``."""
    cons = moment_constraints(eq, state, epsilon)
    tail = feedback_tail(eq, state, epsilon)
    grid = cons.grid
    W = grid.weights()
    tau = grid.t
    C = convolution_matrix(np.exp(eq.a0 * tau), grid.h)
    n = grid.M + 1
    # sum_s K_s' W K_s with K_s = d_s I + b_s C collapses to three terms
    dd = sum(d * d for d in eq.d_coeffs)
    bs = [d * eq.a0 - a for d, a in zip(eq.d_coeffs, eq.a_coeffs[1:])]
    db = sum(d * b for d, b in zip(eq.d_coeffs, bs))
    bb = sum(b * b for b in bs)
    WC = W[:, None] * C
    H = np.diag(W * (1.0 + dd)) + db * (WC + WC.T) + bb * (C.T @ WC)
    g = np.zeros(n)
    const = 0.0
    for d, b, phi in zip(eq.d_coeffs, bs, tail.phi):
        Wphi = W * phi.samples
        g += d * Wphi + b * (C.T @ Wphi)
        const += float(phi.samples @ Wphi)
    return QuadraticProgram(grid, H, g, cons, const)


def system_program(sys: RetardedSystem, state: InitialState, epsilon: float) -> QuadraticProgram:
    """Companion system: the response on ``[k, k + eps)`` is ``g_k/(k-1)! t^{k-1} * u0``."""
    cons = system_moment_constraints(sys, state, epsilon)
    tail = system_feedback_tail(sys, state, epsilon)
    grid = cons.grid
    W = grid.weights()
    tau = grid.t
    ops = []
    for k, gk in enumerate(sys.companion_g, start=1):
        K = convolution_matrix(tau ** (k - 1), grid.h) * (gk / factorial(k - 1))
        ops.append((tail.phi[k - 1].samples, K))
    return _program(grid, W, ops, cons)


def pure_moment_program(constraints: MomentConstraints) -> QuadraticProgram:
    """Minimum-norm solution of the moments alone (no tail energy)."""
    grid = constraints.grid
    W = grid.weights()
    return QuadraticProgram(grid, np.diag(W), np.zeros(grid.M + 1), constraints)


def kkt_solve(qp: QuadraticProgram) -> GridFunction:
    """Solve ``[H K'; K 0][u; lam] = [-g; c]`` by dense LU."""
    K = qp.constraints.matrix()
    m, n = K.shape
    A = np.zeros((n + m, n + m))
    A[:n, :n] = qp.hessian
    A[:n, n:] = K.T
    A[n:, :n] = K
    rhs = np.concatenate([-qp.gradient, qp.constraints.rhs])
    try:
        lu = scipy.linalg.lu_factor(A, check_finite=True)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise DegenerateMomentSystem(str(exc)) from exc
    if np.any(np.abs(np.diag(lu[0])) < 1e-14 * np.max(np.abs(np.diag(lu[0])))):
        raise DegenerateMomentSystem("saddle-point matrix is singular (dependent constraints?)")
    sol = scipy.linalg.lu_solve(lu, rhs)
    return qp.grid.with_samples(sol[:n])


# ---------------------------------------------------------------------------
# Volterra route


def volterra_solve(kernel: GridFunction, rhs: GridFunction, c: float = 0.0, c_basis: Optional[GridFunction] = None) -> GridFunction:
    """Solve ``u - k * u = rhs + c * basis`` (basis defaults to 1) by forward substitution.

    Trapezoid discretization: ``u_i (1 - h k_0 / 2) = f_i + h (sum_{0<j<i} k_{i-j} u_j + k_i u_0 / 2)``.
    """
    h = kernel.h
    k = kernel.samples
    f = rhs.samples + (c if c_basis is None else c * c_basis.samples)
    f = np.asarray(f, dtype=np.result_type(k.dtype, f.dtype))
    n = len(f)
    u = np.zeros_like(f)
    u[0] = f[0]
    diag = 1.0 - 0.5 * h * k[0]
    for i in range(1, n):
        acc = 0.5 * k[i] * u[0] + np.dot(k[i - 1:0:-1], u[1:i])
        u[i] = (f[i] + h * acc) / diag
    return rhs.with_samples(u)


def constant_search(family: Callable[[float], GridFunction], constraints: MomentConstraints):
    """Find the scalar ``c`` making ``family(c)`` feasible, assuming affine dependence."""
    r0 = constraints.residual(family(0.0))[0]
    scale = max(1.0, abs(constraints.rhs[0]))
    if abs(r0) <= 1e-14 * scale:
        return 0.0, family(0.0)
    r1 = constraints.residual(family(1.0))[0]
    slope = r1 - r0
    if abs(slope) <= 1e-14 * scale:
        raise DegenerateMomentSystem("moment condition does not depend on the constant")
    c = -r0 / slope
    return c, family(c)


def _sinhc(a: float, t: np.ndarray) -> np.ndarray:
    if abs(a) * np.max(np.abs(t)) < 1e-6:
        return t + a * a * t**3 / 6.0
    return np.sinh(a * t) / a


def volterra_problem(eq: DelayEquation, state: InitialState, epsilon: float):
    """Kernel, right-hand side and constant basis of the generator's integral equation.

    The optimality condition reads::

        u - (S/d^2) sinhc(a0, .) * u = d^-2 [sum_s b_s e^{-a0 .} * phi_s - sum_s d_s phi_s] + c e^{-a0 t}/d^2

    with ``S = sum_{k>=1} (a_k^2 - d_k^2 a0^2)``.
    """
    cons = moment_constraints(eq, state, epsilon)
    tail = feedback_tail(eq, state, epsilon)
    grid = cons.grid
    t = grid.t
    a0 = eq.a0
    d2 = 1.0 + sum(d * d for d in eq.d_coeffs)
    S = sum(a * a - d * d * a0 * a0 for a, d in zip(eq.a_coeffs[1:], eq.d_coeffs))
    kernel = grid.with_samples((S / d2) * _sinhc(a0, t))
    C = convolution_matrix(np.exp(-a0 * t), grid.h)
    rhs = np.zeros(grid.M + 1)
    for a, d, phi in zip(eq.a_coeffs[1:], eq.d_coeffs, tail.phi):
        b = d * a0 - a
        rhs += b * (C @ phi.samples) - d * phi.samples
    return kernel, grid.with_samples(rhs / d2), grid.with_samples(np.exp(-a0 * t) / d2), cons


def volterra_generator(eq: DelayEquation, state: InitialState, epsilon: float):
    """Optimal generator via the integral equation; returns ``(c, u0)``."""
    kernel, rhs, basis, cons = volterra_problem(eq, state, epsilon)
    return constant_search(lambda c: volterra_solve(kernel, rhs, c, basis), cons)
