"""Admissible (null-steering) controls built from a generator on ``[0, eps]``.

A scalar admissible control on ``[0, 1 + eps]`` is fully determined by its
first piece ``u0``. Between the delay breakpoints it either cancels the
history (``psi`` pieces) or cancels the history plus the response to ``u0``
(``phi`` pieces). ``u0`` itself is free up to one linear moment condition.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial
from typing import Optional

import numpy as np

from .core import (
    ControlSignal,
    DelayEquation,
    GridFunction,
    InitialState,
    RetardedSystem,
    Segment,
    convolve,
    grid_function,
    steps,
    validate_state,
)
from .exceptions import CompatibilityViolation, GridError, HorizonError, MomentViolation
from .simulation import closed_loop, free_trajectory

__all__ = [
    "MomentConstraints",
    "FeedbackTail",
    "moment_constraints",
    "system_moment_constraints",
    "feedback_tail",
    "system_feedback_tail",
    "assemble_control",
    "assemble_system_control",
    "project_generator",
    "reconstruct_state",
    "MOMENT_TOL",
]

MOMENT_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class MomentConstraints:
    """Linear conditions ``int_0^eps kernel_k(t) u0(t) dt = rhs_k``."""

    kernels: tuple
    rhs: np.ndarray
    epsilon: float

    @property
    def grid(self) -> GridFunction:
        return self.kernels[0]

    def matrix(self) -> np.ndarray:
        """Rows ``w * kernel_k`` so that ``matrix() @ u0.samples`` are the quadrature moments."""
        w = self.kernels[0].weights()
        return np.array([w * k.samples for k in self.kernels])

    def residual(self, u0: GridFunction) -> np.ndarray:
        return self.matrix() @ u0.samples - self.rhs

    def check(self, u0: GridFunction, tol: float = MOMENT_TOL) -> None:
        res = np.abs(self.residual(u0))
        if np.max(res) > tol:
            raise MomentViolation(f"moment residual {np.max(res):.3g} exceeds {tol:g}")

    def min_norm(self) -> GridFunction:
        return project_generator(self, self.grid * 0.0)


@dataclass(frozen=True, eq=False)
class FeedbackTail:
    """State-only pieces of the admissible control.

    ``psi[s-1]`` lives on ``[r_{s-1} + eps - r_s, 0]`` (shifted by ``r_s`` it
    covers ``[r_{s-1} + eps, r_s]``) and is ``None`` when that interval is
    empty. ``phi[s-1]`` lives on ``[0, eps]``.
    """

    psi: tuple
    phi: tuple


def moment_constraints(eq: DelayEquation, state: InitialState, epsilon: float) -> MomentConstraints:
    eq.check_epsilon(epsilon)
    xt = free_trajectory(eq, state, epsilon)
    kernel = grid_function(0.0, epsilon, state.h, lambda t: np.exp(eq.a0 * (epsilon - t)))
    return MomentConstraints((kernel,), np.array([-xt.samples[-1]]), epsilon)


def _history_term(eq: DelayEquation, state: InitialState, k: int, start: int, n: int) -> np.ndarray:
    """``d_k x0'(t) - a_k x0(t)`` at history nodes ``start .. start + n`` (index 0 is t = -1)."""
    hist = state.x0.samples
    out = -eq.a_coeffs[k] * hist[start:start + n + 1]
    dk = eq.d_coeffs[k - 1]
    if dk != 0.0:
        out = out + dk * state.x0_deriv.samples[start:start + n + 1]
    return out


def feedback_tail(eq: DelayEquation, state: InitialState, epsilon: float) -> FeedbackTail:
    """Compute the ``psi_s`` and ``phi_s`` pieces, which depend on the state only."""
    validate_state(eq, state)
    eq.check_epsilon(epsilon)
    h = state.h
    M = state.x0.M
    N = eq.N
    r = eq.delays
    lag = [steps(rk, h) for rk in r]
    ne = steps(epsilon, h)
    a0 = eq.a0
    xt = free_trajectory(eq, state, epsilon).samples

    psi = []
    for s in range(1, N + 1):
        # sigma in [r_{s-1} + eps - r_s, 0]; argument of x0 is sigma + r_s - r_k
        lo = lag[s - 1] + ne - lag[s]
        n = -lo
        if n < 1:
            psi.append(None)
            continue
        acc = np.zeros(n + 1, dtype=xt.dtype)
        for k in range(s, N + 1):
            start = M + lo + lag[s] - lag[k]
            acc = acc + _history_term(eq, state, k, start, n)
        psi.append(GridFunction(lo * h, 0.0, acc))

    # sum_k (d_k x0' - a_k x0)(sigma - r_k) on [0, eps]; shared by all phi_s
    shared = np.zeros(ne + 1, dtype=xt.dtype)
    for k in range(1, N + 1):
        shared = shared + _history_term(eq, state, k, M - lag[k], ne)

    phi = []
    for s in range(1, N + 1):
        ds = eq.d_coeffs[s - 1]
        bs = ds * a0 - eq.a_coeffs[s]
        acc = bs * xt - ds * shared
        for k in range(s + 1, N + 1):
            acc = acc + _history_term(eq, state, k, M + lag[s] - lag[k], ne)
        phi.append(GridFunction(0.0, epsilon, acc))
    return FeedbackTail(tuple(psi), tuple(phi))


def _check_generator(u0: GridFunction, epsilon: Optional[float], h: float) -> float:
    if abs(u0.t_start) > 1e-12:
        raise GridError("generator must start at t = 0")
    if abs(u0.h - h) > 1e-12 * h:
        raise GridError(f"generator step {u0.h} differs from state step {h}")
    if epsilon is not None and abs(u0.t_end - epsilon) > 1e-9:
        raise GridError(f"generator ends at {u0.t_end}, expected eps={epsilon}")
    return u0.t_end


def exp_convolution(a0: float, u0: GridFunction) -> GridFunction:
    """``int_0^t e^{a0 (t - tau)} u0(tau) dtau`` at the nodes of `u0`'s grid."""
    return convolve(u0.with_samples(np.exp(a0 * (u0.t - u0.t_start))), u0)


def assemble_control(
    eq: DelayEquation,
    state: InitialState,
    u0: GridFunction,
    tol: Optional[float] = MOMENT_TOL,
    tail: Optional[FeedbackTail] = None,
) -> ControlSignal:
    """Extend the generator `u0` to the admissible control on ``[0, 1 + eps]``.

    Pass ``tol=None`` to skip the moment check (useful for building
    deliberately infeasible controls).
    """
    epsilon = _check_generator(u0, None, state.h)
    if tol is not None:
        moment_constraints(eq, state, epsilon).check(u0, tol)
    if tail is None:
        tail = feedback_tail(eq, state, epsilon)
    conv = exp_convolution(eq.a0, u0)
    r = eq.delays
    segs = [Segment(0.0, epsilon, u0, "generator")]
    for s in range(1, eq.N + 1):
        p = tail.psi[s - 1]
        if p is not None:
            segs.append(Segment(r[s - 1] + epsilon, r[s], p.shift(r[s]), f"psi_{s}"))
        ds = eq.d_coeffs[s - 1]
        bs = ds * eq.a0 - eq.a_coeffs[s]
        piece = tail.phi[s - 1] + ds * u0.samples + bs * conv.samples
        segs.append(Segment(r[s], r[s] + epsilon, piece.shift(r[s]), f"phi_{s}"))
    return ControlSignal(1.0 + epsilon, tuple(segs), u0, epsilon)


def project_generator(constraints: MomentConstraints, u0: GridFunction) -> GridFunction:
    """Nearest feasible generator in the quadrature-weighted L2 norm."""
    K = constraints.matrix()
    kern = np.array([k.samples for k in constraints.kernels])
    res = K @ u0.samples - constraints.rhs
    gram = K @ kern.T
    lam = np.linalg.solve(gram, res)
    return u0 - kern.T @ lam


# ---------------------------------------------------------------------------
# companion systems


def _require_companion(sys: RetardedSystem) -> None:
    if not sys.is_companion():
        raise ValueError("system must be in companion form (see spectral.to_companion)")


def system_moment_constraints(sys: RetardedSystem, state: InitialState, epsilon: float) -> MomentConstraints:
    """Moments ``int_0^eps (eps - t)^{k-1} u0 = c_k`` for ``k = 1..n``.

    The constants come from the closed-loop run with ``u0 = 0``: the cascade
    reaches ``x_k(k - 1 + eps) = x_k^free + int (eps - t)^{k-1} u0 / (k-1)!``,
    hence ``c_k = -(k-1)! x_k^free``.
    """
    _require_companion(sys)
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon={epsilon} must lie in (0, 1)")
    n = sys.dim
    h = state.h
    zero = grid_function(0.0, epsilon, h, lambda t: np.zeros_like(t))
    traj, _, _ = closed_loop(sys, state, zero, n - 1 + epsilon)
    rhs = np.array([-factorial(k - 1) * traj.at(k - 1 + epsilon)[k - 1] for k in range(1, n + 1)])
    kernels = tuple(
        grid_function(0.0, epsilon, h, lambda t, p=k - 1: (epsilon - t) ** p) for k in range(1, n + 1)
    )
    return MomentConstraints(kernels, rhs, epsilon)


def _power_kernel(p: int, grid: GridFunction) -> GridFunction:
    return grid.with_samples((grid.t - grid.t_start) ** p)


def system_feedback_tail(sys: RetardedSystem, state: InitialState, epsilon: float) -> FeedbackTail:
    """State-only pieces of the system control, read off one feasible closed-loop run.

    With any feasible generator ``up`` the realized control on ``[k, k + eps)``
    is ``phi_k + (g_k/(k-1)!) t^{k-1} * up``; subtracting the known ``up``
    response leaves ``phi_k``. ``psi_k`` is the control on ``[k - 1 + eps, k]``
    shifted to end at 0.
    """
    cons = system_moment_constraints(sys, state, epsilon)
    up_gen = cons.min_norm()
    n = sys.dim
    h = state.h
    T = n + epsilon
    _, um, upl = closed_loop(sys, state, up_gen, T)
    ne = steps(epsilon, h)
    g = sys.companion_g
    psi, phi = [], []
    for k in range(1, n + 1):
        i0 = steps(k - 1 + epsilon, h)
        i1 = steps(k, h)
        if i1 - i0 >= 1:
            seg = np.array(upl[i0:i1 + 1], copy=True)
            seg[-1] = um[i1]
            psi.append(GridFunction(k - 1 + epsilon - k, 0.0, seg))
        else:
            psi.append(None)
        seg = np.array(upl[i1:i1 + ne + 1], copy=True)
        seg[-1] = um[i1 + ne]
        resp = convolve(_power_kernel(k - 1, up_gen), up_gen).samples * (g[k - 1] / factorial(k - 1))
        phi.append(GridFunction(0.0, epsilon, seg - resp))
    return FeedbackTail(tuple(psi), tuple(phi))


def assemble_system_control(
    sys: RetardedSystem,
    state: InitialState,
    u0: GridFunction,
    tol: Optional[float] = MOMENT_TOL,
):
    """Admissible system control on ``[0, n + eps]`` realized by the closed loop.

    Returns the control; its segments are labelled ``generator``, ``psi_k``
    (on ``[k - 1 + eps, k)``) and ``phi_k`` (on ``[k, k + eps)``).
    """
    _require_companion(sys)
    epsilon = _check_generator(u0, None, state.h)
    if tol is not None:
        system_moment_constraints(sys, state, epsilon).check(u0, tol)
    n = sys.dim
    T = n + epsilon
    _, um, up = closed_loop(sys, state, u0, T)
    bps = [0.0, epsilon]
    labels = ["generator"]
    for k in range(1, n + 1):
        bps += [float(k), k + epsilon]
        labels += [f"psi_{k}", f"phi_{k}"]
    return ControlSignal.from_node_limits(state.h, um, up, bps, labels, u0, epsilon)


# ---------------------------------------------------------------------------
# inverse map for the simplest equation


def reconstruct_state(eq: DelayEquation, u: ControlSignal, tol: float = 1e-6, epsilon: Optional[float] = None) -> InitialState:
    """Recover the initial state whose admissible family contains `u`.

    Only for ``x' = a1 x(t - 1) + u``. The tail on ``[1, 1 + eps]`` is
    differentiated numerically; ``u`` must vanish at ``1 + eps``.
    """
    if not eq.is_simplest():
        raise ValueError("state reconstruction is implemented for x' = a1 x(t-1) + u only")
    a1 = eq.a_coeffs[1]
    if a1 == 0.0:
        raise ValueError("a1 must be nonzero")
    eps = u.epsilon if epsilon is None else epsilon
    if eps is None:
        raise ValueError("control carries no epsilon; pass it explicitly")
    h = u.h
    T = 1.0 + eps
    um, up = u.node_limits()
    if abs(um[-1]) > tol * max(1.0, np.max(np.abs(up))):
        raise HorizonError(f"control does not vanish at T: |u(T-)| = {abs(um[-1]):.3g}")
    M = steps(1.0, h)
    ne = steps(eps, h)
    i1 = M  # node t = 1
    y = -up[i1] / a1
    x0 = np.empty(M + 1, dtype=up.dtype)
    # s in [-1 + eps, 0): x0(s) = -u(s + 1)/a1 ; s = 0 uses the left limit at t = 1
    x0[ne:M] = -up[ne:M] / a1
    x0[M] = -um[M] / a1
    tail = np.array(up[M:M + ne + 1], copy=True)
    tail[-1] = um[M + ne]
    dtail = np.gradient(tail, h, edge_order=2 if ne >= 2 else 1)
    gen = np.array(up[:ne + 1], copy=True)
    gen[-1] = um[ne]
    x0[:ne] = (-dtail / a1**2 - gen / a1)[:ne]
    return InitialState(y, GridFunction(-1.0, 0.0, x0))
