"""Method-of-steps simulation of delay equations and companion systems.

All runs use one global uniform grid on ``[-1, t_end]`` whose step is taken
from the initial state. Since every delay is a whole number of steps, a
delayed argument always lands on a node. Both one-sided limits are stored at
every node, so jumps at breakpoints (of the control, or of ``x`` at ``t = 0``
for retarded data) are propagated without smearing.

Scalar update (exponential trapezoid on ``x' = a0 x + F``)::

    x[i+1] = e^{a0 h} x[i] + h/2 (e^{a0 h} F+[i] + F-[i+1])

where ``F = sum_{k>=1} (a_k x(t - r_k) - d_k x'(t - r_k)) + u``. The
derivative channel is ``x' = a0 x + F``, evaluated from the update rather
than by differencing.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.signal import lfilter

from .core import (
    ControlSignal,
    DelayEquation,
    GridFunction,
    InitialState,
    RetardedSystem,
    antiderivative,
    steps,
    validate_state,
)
from .exceptions import GridError, HorizonError

__all__ = [
    "Trajectory",
    "simulate",
    "free_trajectory",
    "simulate_system",
    "closed_loop",
    "null_residual",
]


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Solution on ``[-1, t_end]``.

    ``values`` holds right limits at nodes (so ``values(0) == y``), and
    ``values_left`` the left limits; they differ only where ``x`` jumps.
    For systems the samples have shape ``(M + 1, n)``.
    """

    t_end: float
    values: GridFunction
    values_left: np.ndarray
    deriv: Optional[GridFunction] = None
    deriv_left: Optional[np.ndarray] = None

    t_start = -1.0

    @property
    def h(self) -> float:
        return self.values.h

    @property
    def t(self) -> np.ndarray:
        return self.values.t

    def window(self, a: float, b: float) -> GridFunction:
        return self.values.restrict(a, b)

    def at(self, t: float):
        return self.values.samples[self.values.node_index(t)]


def _control_limits(u: Optional[ControlSignal], t_end: float, h: float, dtype):
    n = steps(t_end, h)
    if u is None:
        z = np.zeros(n + 1, dtype=dtype)
        return z, z
    if abs(u.h - h) > 1e-12 * h:
        raise GridError(f"control grid step {u.h} differs from state grid step {h}")
    if t_end > u.horizon + 1e-9 * max(1.0, u.horizon):
        raise HorizonError(f"t_end={t_end} exceeds control horizon {u.horizon}")
    return u.node_limits(t_end)


def simulate(eq: DelayEquation, state: InitialState, u: Optional[ControlSignal], t_end: float) -> Trajectory:
    """Integrate the scalar equation from `state` under control `u` up to `t_end`.

    ``u=None`` means the zero control. Neutral states must carry
    ``x0_deriv`` (see :func:`validate_state`).
    """
    validate_state(eq, state)
    h = state.h
    M = state.x0.M
    n = steps(t_end, h)
    if n < 1:
        raise GridError("t_end must be at least one grid step")
    lags = [steps(r, h) for r in eq.delays[1:]]
    a = np.asarray(eq.a_coeffs[1:])
    d = np.asarray(eq.d_coeffs)

    um, up = _control_limits(u, t_end, h, float)
    dtype = np.result_type(state.x0.samples.dtype, np.asarray(state.y).dtype, um.dtype, up.dtype)

    total = M + n
    xm = np.zeros(total + 1, dtype=dtype)
    xp = np.zeros(total + 1, dtype=dtype)
    dm = np.zeros(total + 1, dtype=dtype)
    dp = np.zeros(total + 1, dtype=dtype)
    hist = state.x0.samples
    dhist = state.x0_deriv.samples if state.x0_deriv is not None else np.gradient(hist, h, edge_order=2)
    xm[:M + 1] = hist
    xp[:M + 1] = hist
    dm[:M + 1] = dhist
    dp[:M + 1] = dhist
    xp[M] = state.y

    a0 = eq.a0
    E = np.exp(a0 * h)
    chunk = lags[0]

    def forcing(x_arr, d_arr, u_arr, lo, hi):
        # F on global indices [lo, hi)
        out = np.array(u_arr[lo - M:hi - M], dtype=dtype)
        for ak, dk, m in zip(a, d, lags):
            if ak != 0.0:
                out += ak * x_arr[lo - m:hi - m]
            if dk != 0.0:
                out -= dk * d_arr[lo - m:hi - m]
        return out

    s = M
    while s < total:
        e = min(s + chunk, total)
        Fp = forcing(xp, dp, up, s, e)
        Fm = forcing(xm, dm, um, s + 1, e + 1)
        dp[s] = a0 * xp[s] + Fp[0]
        b = 0.5 * h * (E * Fp + Fm)
        x_new, _ = lfilter([1.0], [1.0, -E], b, zi=np.array([E * xp[s]], dtype=dtype))
        xm[s + 1:e + 1] = x_new
        xp[s + 1:e + 1] = x_new
        dm[s + 1:e + 1] = a0 * x_new + Fm
        dp[s + 1:e] = a0 * x_new[:-1] + Fp[1:]
        s = e
    dp[total] = dm[total]

    values = GridFunction(-1.0, t_end, xp)
    deriv = GridFunction(-1.0, t_end, dp)
    return Trajectory(t_end, values, xm, deriv, dm)


def _history_forcing(eq: DelayEquation, state: InitialState, upto: float) -> GridFunction:
    """``sum_{k>=1} a_k x0(t - r_k) - d_k x0'(t - r_k)`` on ``[0, upto]``, ``upto <= r_1``."""
    h = state.h
    n = steps(upto, h)
    M = state.x0.M
    hist = state.x0.samples
    dhist = None if state.x0_deriv is None else state.x0_deriv.samples
    out = np.zeros(n + 1, dtype=np.result_type(hist.dtype, float))
    for ak, dk, r in zip(eq.a_coeffs[1:], eq.d_coeffs, eq.delays[1:]):
        start = M - steps(r, h)
        if ak != 0.0:
            out += ak * hist[start:start + n + 1]
        if dk != 0.0:
            out -= dk * dhist[start:start + n + 1]
    return GridFunction(0.0, upto, out)


def free_trajectory(eq: DelayEquation, state: InitialState, upto: float) -> GridFunction:
    """Uncontrolled solution on ``[0, upto]`` for ``upto <= r_1``.

    Evaluated directly from the variation-of-constants formula with the
    initial history as the only forcing.
    """
    if upto > eq.delays[1] + 1e-12:
        raise HorizonError(f"upto={upto} exceeds r_1={eq.delays[1]}")
    validate_state(eq, state)
    G = _history_forcing(eq, state, upto)
    t = G.t
    a0 = eq.a0
    inner = antiderivative(G * np.exp(-a0 * t))
    return GridFunction(0.0, upto, np.exp(a0 * t) * (state.y + inner.samples))


def _system_run(A, bvec, state: InitialState, t_end: float, um, up, feedback=None):
    """Integrate ``x' = A x(t-1) + b u`` with plain trapezoid steps.

    `feedback` is ``(g, eps_index)``: from that node on the control is
    replaced by ``u = g . x(t - 1)`` (left limit at the switching node is kept).
    """
    h = state.h
    M = state.x0.M
    n = steps(t_end, h)
    dim = len(bvec)
    total = M + n
    dtype = np.result_type(state.x0.samples.dtype, np.asarray(state.y).dtype, float)
    xm = np.zeros((total + 1, dim), dtype=dtype)
    xp = np.zeros((total + 1, dim), dtype=dtype)
    hist = state.x0.samples.reshape(M + 1, dim)
    xm[:M + 1] = hist
    xp[:M + 1] = hist
    xp[M] = np.broadcast_to(state.y, (dim,))
    um = np.array(um, dtype=dtype)
    up = np.array(up, dtype=dtype)

    s = M
    while s < total:
        e = min(s + M, total)
        if feedback is not None:
            g, k_eps = feedback
            # control on local indices [s - M, e - M]; node index i >= k_eps uses feedback
            lo, hi = s - M, e - M
            idx = np.arange(lo, hi + 1)
            # global node of local index i is i + M; one unit back is i
            fb_p = xp[idx] @ g
            fb_m = xm[idx] @ g
            mask_p = idx >= k_eps
            mask_m = idx > k_eps
            up[lo:hi + 1] = np.where(mask_p, fb_p, up[lo:hi + 1])
            um[lo:hi + 1] = np.where(mask_m, fb_m, um[lo:hi + 1])
        Fp = xp[s - M:e - M] @ A.T + np.outer(up[s - M:e - M], bvec)
        Fm = xm[s + 1 - M:e + 1 - M] @ A.T + np.outer(um[s + 1 - M:e + 1 - M], bvec)
        inc = np.cumsum(0.5 * h * (Fp + Fm), axis=0)
        xm[s + 1:e + 1] = xp[s] + inc
        xp[s + 1:e + 1] = xm[s + 1:e + 1]
        s = e
    values = GridFunction(-1.0, t_end, xp)
    return Trajectory(t_end, values, xm), um, up


def simulate_system(sys: RetardedSystem, state: InitialState, u: Optional[ControlSignal], t_end: float) -> Trajectory:
    """Integrate ``x'(t) = A x(t - 1) + b u(t)`` by the method of steps.

    Works for any (A, b); for companion systems this is the cascade
    ``x_1' = -sum g_k x_k(t-1) + u``, ``x_{j+1}' = x_j(t-1)``.
    """
    if state.dim != sys.dim:
        raise GridError(f"state has dimension {state.dim}, system has {sys.dim}")
    um, up = _control_limits(u, t_end, state.h, float)
    traj, _, _ = _system_run(sys.A, sys.b, state, t_end, um, up)
    return traj


def closed_loop(sys: RetardedSystem, state: InitialState, u0: GridFunction, t_end: float):
    """Run the cascade with ``u = u0`` on ``[0, eps)`` and ``u = sum g_k x_k(t-1)`` afterwards.

    Returns ``(trajectory, u_minus, u_plus)`` with the realized control's node
    limits on ``[0, t_end]``.
    """
    if not sys.is_companion():
        raise ValueError("closed loop needs a system in companion form")
    h = state.h
    if abs(u0.h - h) > 1e-12 * h or abs(u0.t_start) > 1e-12:
        raise GridError("generator must live on [0, eps] with the state's grid step")
    n = steps(t_end, h)
    k_eps = u0.M
    dtype = np.result_type(u0.samples.dtype, float)
    um = np.zeros(n + 1, dtype=dtype)
    up = np.zeros(n + 1, dtype=dtype)
    m = min(k_eps, n)
    um[:m + 1] = u0.samples[:m + 1]
    up[:m + 1] = u0.samples[:m + 1]
    g = np.asarray(sys.companion_g)
    return _system_run(sys.A, sys.b, state, t_end, um, up, feedback=(g, k_eps))


def null_residual(traj: Trajectory, T: float) -> float:
    """``max |x(t)|`` over nodes of ``[T - 1, T]`` (both one-sided limits, all components)."""
    if T > traj.t_end + 1e-9 * max(1.0, traj.t_end):
        raise HorizonError(f"trajectory ends at {traj.t_end} < T={T}")
    i = traj.values.node_index(T - 1.0)
    j = traj.values.node_index(T)
    right = np.abs(traj.values.samples[i:j + 1])
    left = np.abs(traj.values_left[i:j + 1])
    return float(max(np.max(right), np.max(left)))
