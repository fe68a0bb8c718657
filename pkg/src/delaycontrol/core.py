"""Domain types and the uniform-grid function calculus.

Every function in the package lives on a uniform grid with trapezoid
quadrature. Grids are node-aligned: delays, the generator length ``epsilon``
and all breakpoints must be integer multiples of the step ``h``, so that
piecewise-defined objects never straddle a node.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .exceptions import (
    CompatibilityViolation,
    GridError,
    HorizonError,
    MissingDerivative,
)

__all__ = [
    "GridFunction",
    "DelayEquation",
    "RetardedSystem",
    "InitialState",
    "Segment",
    "ControlSignal",
    "steps",
    "make_grid_function",
    "grid_function",
    "convolve",
    "antiderivative",
    "validate_state",
    "controllability_matrix",
]

# relative tolerance when checking that an interval is a whole number of steps
_ALIGN_RTOL = 1e-7


def steps(length: float, h: float) -> int:
    """Number of grid steps of size `h` in `length`; raise if not commensurate."""
    if h <= 0:
        raise GridError(f"grid step must be positive, got {h!r}")
    n = length / h
    k = int(round(n))
    if abs(n - k) > _ALIGN_RTOL * max(1.0, abs(n)):
        raise GridError(f"length {length!r} is not a multiple of h={h!r}")
    return k


def trapezoid_weights(M: int, h: float) -> np.ndarray:
    w = np.full(M + 1, h)
    w[0] = w[-1] = 0.5 * h
    return w


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Samples of a (real or complex, scalar or vector) function on a uniform grid.

    ``samples[i]`` is the value at ``t_start + i*h``. Vector-valued functions
    keep time on axis 0, i.e. ``samples.shape == (M + 1, n)``.
    """

    t_start: float
    t_end: float
    samples: np.ndarray

    def __post_init__(self):
        s = np.array(self.samples, copy=True)
        if s.dtype.kind not in "fc":
            s = s.astype(float)
        # one-step pieces occur between close breakpoints; public constructors insist on M >= 2
        if s.ndim not in (1, 2) or s.shape[0] < 2:
            raise GridError("need at least 2 samples along axis 0")
        if not self.t_end > self.t_start:
            raise GridError(f"degenerate interval [{self.t_start}, {self.t_end}]")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "t_start", float(self.t_start))
        object.__setattr__(self, "t_end", float(self.t_end))

    @property
    def M(self) -> int:
        return self.samples.shape[0] - 1

    @property
    def h(self) -> float:
        return (self.t_end - self.t_start) / self.M

    @property
    def t(self) -> np.ndarray:
        return self.t_start + self.h * np.arange(self.M + 1)

    @property
    def is_complex(self) -> bool:
        return self.samples.dtype.kind == "c"

    def weights(self) -> np.ndarray:
        return trapezoid_weights(self.M, self.h)

    def integrate(self):
        """Trapezoid integral over the whole interval."""
        return np.tensordot(self.weights(), self.samples, axes=(0, 0))[()]

    def cumulative(self) -> "GridFunction":
        return antiderivative(self)

    def inner(self, other: "GridFunction", conjugate: bool = True):
        _check_same_grid(self, other)
        o = np.conj(other.samples) if conjugate else other.samples
        return np.sum(self.weights() * self.samples * o)

    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.weights()[:, None] * np.abs(self.samples.reshape(self.M + 1, -1)) ** 2)))

    def sup(self) -> float:
        return float(np.max(np.abs(self.samples)))

    def __call__(self, t):
        """Piecewise-linear interpolation between nodes (exact at nodes)."""
        t = np.asarray(t, dtype=float)
        slack = 1e-9 * max(1.0, abs(self.t_end))
        if np.any(t < self.t_start - slack) or np.any(t > self.t_end + slack):
            raise HorizonError(f"evaluation outside [{self.t_start}, {self.t_end}]")
        x = (t - self.t_start) / self.h
        i = np.clip(np.floor(x).astype(int), 0, self.M - 1)
        theta = x - i
        if self.samples.ndim == 2:
            theta = theta[..., None]
        return (1 - theta) * self.samples[i] + theta * self.samples[i + 1]

    def node_index(self, t: float) -> int:
        k = steps(t - self.t_start, self.h)
        if not 0 <= k <= self.M:
            raise HorizonError(f"t={t} is not inside [{self.t_start}, {self.t_end}]")
        return k

    def restrict(self, a: float, b: float) -> "GridFunction":
        """Sub-grid on ``[a, b]``; both ends must be nodes."""
        i, j = self.node_index(a), self.node_index(b)
        return GridFunction(a, b, self.samples[i:j + 1])

    def shift(self, dt: float) -> "GridFunction":
        return GridFunction(self.t_start + dt, self.t_end + dt, self.samples)

    def reversed(self) -> "GridFunction":
        """``t -> f(t_start + t_end - t)`` on the same interval."""
        return GridFunction(self.t_start, self.t_end, self.samples[::-1])

    def derivative(self) -> "GridFunction":
        """Centered differences, second-order one-sided at the ends."""
        return GridFunction(self.t_start, self.t_end, np.gradient(self.samples, self.h, axis=0, edge_order=2 if self.M >= 2 else 1))

    def with_samples(self, samples) -> "GridFunction":
        return GridFunction(self.t_start, self.t_end, samples)

    def component(self, k: int) -> "GridFunction":
        return GridFunction(self.t_start, self.t_end, self.samples[:, k])

    def real(self) -> "GridFunction":
        return self.with_samples(self.samples.real)

    def _binary(self, other, op):
        if isinstance(other, GridFunction):
            _check_same_grid(self, other)
            return self.with_samples(op(self.samples, other.samples))
        return self.with_samples(op(self.samples, other))

    def __add__(self, other):
        return self._binary(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __rsub__(self, other):
        return self._binary(other, lambda a, b: b - a)

    def __mul__(self, other):
        return self._binary(other, np.multiply)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._binary(other, np.divide)

    def __neg__(self):
        return self.with_samples(-self.samples)

    def __repr__(self):
        return f"GridFunction([{self.t_start:g}, {self.t_end:g}], M={self.M}, dtype={self.samples.dtype})"


def _check_same_grid(f: GridFunction, g: GridFunction) -> None:
    scale = max(1.0, abs(f.t_end), abs(f.t_start))
    if f.M != g.M or abs(f.t_start - g.t_start) > 1e-12 * scale or abs(f.t_end - g.t_end) > 1e-12 * scale:
        raise GridError(f"grid mismatch: {f!r} vs {g!r}")


def make_grid_function(t_start: float, t_end: float, M: int, evaluator: Callable) -> GridFunction:
    """Sample `evaluator` at ``M + 1`` uniform nodes of ``[t_start, t_end]``.

    `evaluator` may be vectorized; scalar-only callables are mapped node by node.
    """
    if M < 2:
        raise GridError(f"need M >= 2, got {M}")
    if not t_end > t_start:
        raise GridError(f"degenerate interval [{t_start}, {t_end}]")
    t = t_start + (t_end - t_start) / M * np.arange(M + 1)
    try:
        values = np.asarray(evaluator(t))
        if values.shape[:1] != t.shape:
            raise ValueError
    except (TypeError, ValueError):
        values = np.array([evaluator(float(ti)) for ti in t])
    return GridFunction(t_start, t_end, values)


def grid_function(t_start: float, t_end: float, h: float, evaluator: Callable) -> GridFunction:
    """Like :func:`make_grid_function`, with the step given instead of the node count."""
    return make_grid_function(t_start, t_end, steps(t_end - t_start, h), evaluator)


def _as_samples(f) -> np.ndarray:
    return f.samples if isinstance(f, GridFunction) else np.asarray(f)


def _conv_samples(fs: np.ndarray, gs: np.ndarray, h: float) -> np.ndarray:
    # trapezoid at node i: h * (sum_{j<=i} f[i-j] g[j] - (f[i] g[0] + f[0] g[i]) / 2)
    n = len(fs)
    full = np.convolve(fs, gs)[:n]
    return h * (full - 0.5 * (fs * gs[0] + fs[0] * gs))


def convolve(f: GridFunction, g: GridFunction) -> GridFunction:
    """Causal convolution ``(f*g)(t_i) = int_0^{t_i} f(t_i - s) g(s) ds`` at every node.

    Times are measured from the common ``t_start``. Both functions must share
    the grid; the result lives on it too.
    """
    _check_same_grid(f, g)
    if f.samples.ndim != 1 or g.samples.ndim != 1:
        raise GridError("convolve expects scalar-valued grid functions")
    return f.with_samples(_conv_samples(f.samples, g.samples, f.h))


def antiderivative(f: GridFunction) -> GridFunction:
    """Cumulative trapezoid integral starting at ``t_start`` (value 0 there)."""
    s = f.samples
    inc = 0.5 * f.h * (s[1:] + s[:-1])
    out = np.zeros_like(s)
    out[1:] = np.cumsum(inc, axis=0)
    return f.with_samples(out)


# ---------------------------------------------------------------------------
# equations and systems


@dataclass(frozen=True)
class DelayEquation:
    """Scalar equation ``x'(t) + sum d_k x'(t - r_k) = sum a_k x(t - r_k) + u(t)``.

    Parameters
    ----------
    delays : sequence of float
        ``r_0 = 0 < r_1 < ... < r_N = 1``.
    a_coeffs : sequence of float
        ``a_0 .. a_N``.
    d_coeffs : sequence of float, optional
        ``d_1 .. d_N``; empty means a retarded equation.
    """

    delays: tuple
    a_coeffs: tuple
    d_coeffs: tuple = ()

    def __post_init__(self):
        r = tuple(float(v) for v in self.delays)
        a = tuple(float(v) for v in self.a_coeffs)
        d = tuple(float(v) for v in self.d_coeffs)
        if len(r) < 2:
            raise ValueError("need at least the delays r_0 = 0 and r_N = 1")
        if r[0] != 0.0 or r[-1] != 1.0:
            raise ValueError(f"delays must start at 0 and end at 1, got {r}")
        if any(r2 <= r1 for r1, r2 in zip(r, r[1:])):
            raise ValueError(f"delays must be strictly increasing, got {r}")
        N = len(r) - 1
        if len(a) != N + 1:
            raise ValueError(f"expected {N + 1} a-coefficients, got {len(a)}")
        if not d:
            d = (0.0,) * N
        if len(d) != N:
            raise ValueError(f"expected {N} d-coefficients, got {len(d)}")
        if d[-1] ** 2 + a[-1] ** 2 == 0:
            raise ValueError("d_N and a_N cannot both vanish")
        object.__setattr__(self, "delays", r)
        object.__setattr__(self, "a_coeffs", a)
        object.__setattr__(self, "d_coeffs", d)

    @classmethod
    def simplest(cls, a1: float) -> "DelayEquation":
        """``x'(t) = a1 x(t - 1) + u(t)``."""
        return cls((0.0, 1.0), (0.0, a1))

    @property
    def N(self) -> int:
        return len(self.delays) - 1

    @property
    def a0(self) -> float:
        return self.a_coeffs[0]

    def is_retarded(self) -> bool:
        return all(dk == 0.0 for dk in self.d_coeffs)

    def is_neutral(self) -> bool:
        return self.d_coeffs[-1] != 0.0

    def is_simplest(self) -> bool:
        return self.N == 1 and self.a0 == 0.0 and self.is_retarded()

    def min_gap(self) -> float:
        return min(r2 - r1 for r1, r2 in zip(self.delays, self.delays[1:]))

    def check_epsilon(self, epsilon: float) -> None:
        """Admissible-control formulas need ``0 < epsilon <= min_k (r_k - r_{k-1})`` and ``epsilon < r_1``."""
        if not (0.0 < epsilon < self.delays[1]):
            raise ValueError(f"epsilon={epsilon} must lie in (0, r_1={self.delays[1]})")
        if epsilon > self.min_gap() + 1e-12:
            raise ValueError(f"epsilon={epsilon} exceeds the smallest delay gap {self.min_gap()}")

    def __repr__(self):
        return f"DelayEquation(delays={self.delays}, a={self.a_coeffs}, d={self.d_coeffs})"


def controllability_matrix(A, b) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float).reshape(-1)
    cols = [b]
    for _ in range(len(b) - 1):
        cols.append(A @ cols[-1])
    return np.column_stack(cols)


@dataclass(frozen=True, eq=False)
class RetardedSystem:
    """Vector system ``x'(t) = A x(t - 1) + b u(t)`` with a controllable pair (A, b)."""

    A: np.ndarray
    b: np.ndarray
    companion_g: Optional[tuple] = None

    def __post_init__(self):
        A = np.array(self.A, dtype=float, ndmin=2)
        b = np.array(self.b, dtype=float).reshape(-1)
        n = len(b)
        if A.shape != (n, n):
            raise ValueError(f"A has shape {A.shape}, expected {(n, n)}")
        if np.linalg.matrix_rank(controllability_matrix(A, b)) < n:
            raise ValueError("pair (A, b) is not controllable")
        A.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        if self.companion_g is not None:
            g = tuple(float(v) for v in self.companion_g)
            if len(g) != n or not np.array_equal(A, _companion_matrix(g)) or not np.array_equal(b, np.eye(n)[0]):
                raise ValueError("companion_g given but (A, b) is not in companion form")
            object.__setattr__(self, "companion_g", g)

    @classmethod
    def companion(cls, g: Sequence[float]) -> "RetardedSystem":
        g = tuple(float(v) for v in g)
        return cls(_companion_matrix(g), np.eye(len(g))[0], g)

    @property
    def dim(self) -> int:
        return len(self.b)

    def is_companion(self) -> bool:
        return self.companion_g is not None


def _companion_matrix(g) -> np.ndarray:
    n = len(g)
    C = np.zeros((n, n))
    C[0, :] = -np.asarray(g, dtype=float)
    C[np.arange(1, n), np.arange(n - 1)] = 1.0
    return C


# ---------------------------------------------------------------------------
# initial states


@dataclass(frozen=True, eq=False)
class InitialState:
    """Initial data ``x(0) = y``, ``x(t) = x0(t)`` on ``[-1, 0)``.

    `x0` is a grid function on ``[-1, 0]``; its step fixes the grid for every
    computation made from this state. For systems `y` is an n-vector and
    ``x0.samples`` has shape ``(M + 1, n)``.
    """

    y: object
    x0: GridFunction
    x0_deriv: Optional[GridFunction] = None

    def __post_init__(self):
        y = np.asarray(self.y)
        if y.dtype.kind not in "fc":
            y = y.astype(float)
        y = y[()] if y.ndim == 0 else y.copy()
        if isinstance(y, np.ndarray):
            y.setflags(write=False)
        object.__setattr__(self, "y", y)
        if abs(self.x0.t_start + 1.0) > 1e-12 or abs(self.x0.t_end) > 1e-12:
            raise GridError("x0 must be sampled on [-1, 0]")
        if self.x0_deriv is not None:
            _check_same_grid(self.x0, self.x0_deriv)

    @property
    def h(self) -> float:
        return self.x0.h

    @property
    def dim(self) -> int:
        return 1 if self.x0.samples.ndim == 1 else self.x0.samples.shape[1]

    @classmethod
    def from_functions(cls, y, x0: Callable, x0_deriv: Optional[Callable] = None, h: float = 1e-3) -> "InitialState":
        g = grid_function(-1.0, 0.0, h, x0)
        gd = None if x0_deriv is None else grid_function(-1.0, 0.0, h, x0_deriv)
        return cls(y, g, gd)

    @classmethod
    def zero(cls, h: float = 1e-3, dim: int = 1, neutral: bool = False) -> "InitialState":
        M = steps(1.0, h)
        shape = (M + 1,) if dim == 1 else (M + 1, dim)
        z = GridFunction(-1.0, 0.0, np.zeros(shape))
        y = 0.0 if dim == 1 else np.zeros(dim)
        return cls(y, z, z if neutral else None)

    def scaled(self, alpha) -> "InitialState":
        return InitialState(
            alpha * self.y,
            self.x0 * alpha,
            None if self.x0_deriv is None else self.x0_deriv * alpha,
        )

    def is_zero(self, tol: float = 0.0) -> bool:
        parts = [np.max(np.abs(self.y)), self.x0.sup()]
        if self.x0_deriv is not None:
            parts.append(self.x0_deriv.sup())
        return max(parts) <= tol


def validate_state(eq: DelayEquation, state: InitialState, tol: Optional[float] = None) -> InitialState:
    """Check that `state` is admissible initial data for `eq`.

    Neutral equations need ``x0_deriv`` and ``y == x0(0)`` (within `tol`,
    default ``1e-8 * max(1, |y|)``); retarded equations accept any pair.
    """
    if state.dim != 1:
        raise CompatibilityViolation("scalar equation needs a scalar initial state")
    if eq.is_retarded():
        return state
    if state.x0_deriv is None:
        raise MissingDerivative("neutral equation requires x0_deriv")
    if tol is None:
        tol = 1e-8 * max(1.0, abs(state.y))
    gap = abs(state.y - state.x0.samples[-1])
    if gap > tol:
        raise CompatibilityViolation(f"neutral equation requires y = x0(0); |y - x0(0)| = {gap:.3g}")
    return state


# ---------------------------------------------------------------------------
# piecewise controls


@dataclass(frozen=True, eq=False)
class Segment:
    start: float
    end: float
    fn: GridFunction
    label: str


@dataclass(frozen=True, eq=False)
class ControlSignal:
    """Piecewise control on ``[0, horizon]`` assembled from per-segment grids.

    Segment endpoints hold one-sided limits taken from inside the segment, so
    a breakpoint node carries two values. Point evaluation is left-closed:
    at an interior breakpoint the segment starting there is used.
    """

    horizon: float
    segments: tuple
    generator: Optional[GridFunction] = None
    epsilon: Optional[float] = None

    def __post_init__(self):
        segs = tuple(self.segments)
        if not segs:
            raise ValueError("control needs at least one segment")
        tol = 1e-9 * max(1.0, self.horizon)
        if abs(segs[0].start) > tol or abs(segs[-1].end - self.horizon) > tol:
            raise ValueError("segments must cover [0, horizon]")
        for s1, s2 in zip(segs, segs[1:]):
            if abs(s1.end - s2.start) > tol:
                raise ValueError(f"gap or overlap between segments at {s1.end} / {s2.start}")
        object.__setattr__(self, "segments", segs)

    @property
    def h(self) -> float:
        return self.segments[0].fn.h

    @property
    def breakpoints(self) -> list:
        return [s.start for s in self.segments] + [self.horizon]

    def __call__(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        slack = 1e-9 * max(1.0, self.horizon)
        if np.any(t < -slack) or np.any(t > self.horizon + slack):
            raise HorizonError(f"control evaluated outside [0, {self.horizon}]")
        starts = np.array([s.start for s in self.segments])
        idx = np.searchsorted(starts, t + slack, side="right") - 1
        idx = np.clip(idx, 0, len(self.segments) - 1)
        out = np.empty(t.shape, dtype=np.result_type(*[s.fn.samples.dtype for s in self.segments]))
        for k in np.unique(idx):
            sel = idx == k
            seg = self.segments[k]
            out[sel] = seg.fn(np.clip(t[sel], seg.start, seg.end))
        return out

    def energy(self) -> float:
        """Squared L2(0, T) norm, by trapezoid quadrature on each segment."""
        return float(sum(np.sum(s.fn.weights() * np.abs(s.fn.samples) ** 2) for s in self.segments))

    def norm(self) -> float:
        return float(np.sqrt(self.energy()))

    def node_limits(self, t_end: Optional[float] = None):
        """Left and right limits at every node of the global grid on ``[0, t_end]``.

        Returns ``(minus, plus)``; away from breakpoints both arrays agree.
        """
        h = self.h
        t_end = self.horizon if t_end is None else t_end
        if t_end > self.horizon + 1e-9 * max(1.0, self.horizon):
            raise HorizonError(f"t_end={t_end} exceeds control horizon {self.horizon}")
        n = steps(t_end, h)
        dtype = np.result_type(*[s.fn.samples.dtype for s in self.segments])
        minus = np.zeros(n + 1, dtype=dtype)
        plus = np.zeros(n + 1, dtype=dtype)
        for seg in self.segments:
            i0 = steps(seg.start, h)
            if i0 > n:
                break
            s = seg.fn.samples
            i1 = min(i0 + len(s) - 1, n)
            m = i1 - i0
            plus[i0:i1] = s[:m]
            minus[i0 + 1:i1 + 1] = s[1:m + 1]
            if i1 == n and m < len(s) - 1:
                plus[n] = s[m]
        minus[0] = plus[0]
        if steps(self.horizon, h) == n:
            plus[n] = minus[n]
        return minus, plus

    def reversed(self) -> "ControlSignal":
        """``t -> u(T - t)``, segment by segment."""
        T = self.horizon
        segs = [
            Segment(T - s.end, T - s.start, GridFunction(T - s.end, T - s.start, s.fn.samples[::-1]), s.label)
            for s in reversed(self.segments)
        ]
        return ControlSignal(T, tuple(segs))

    def segment(self, label: str) -> Segment:
        for s in self.segments:
            if s.label == label:
                return s
        raise KeyError(label)

    def __add__(self, other: "ControlSignal") -> "ControlSignal":
        return self._combine(other, 1.0, 1.0)

    def __sub__(self, other: "ControlSignal") -> "ControlSignal":
        return self._combine(other, 1.0, -1.0)

    def __mul__(self, alpha) -> "ControlSignal":
        segs = tuple(Segment(s.start, s.end, s.fn * alpha, s.label) for s in self.segments)
        gen = None if self.generator is None else self.generator * alpha
        return ControlSignal(self.horizon, segs, gen, self.epsilon)

    __rmul__ = __mul__

    def _combine(self, other, alpha, beta):
        if len(self.segments) != len(other.segments) or abs(self.horizon - other.horizon) > 1e-12:
            raise GridError("controls have different segmentations")
        segs = []
        for s, o in zip(self.segments, other.segments):
            segs.append(Segment(s.start, s.end, s.fn * alpha + o.fn * beta, s.label))
        return ControlSignal(self.horizon, tuple(segs), None, self.epsilon)

    @classmethod
    def from_node_limits(cls, h, minus, plus, breakpoints, labels, generator=None, epsilon=None):
        """Cut global node arrays into segments at `breakpoints` (which include 0 and T)."""
        segs = []
        for (a, b), lab in zip(zip(breakpoints, breakpoints[1:]), labels):
            i, j = steps(a, h), steps(b, h)
            if j <= i:
                continue
            s = np.array(plus[i:j + 1], copy=True)
            s[-1] = minus[j]
            segs.append(Segment(a, b, GridFunction(a, b, s), lab))
        return cls(breakpoints[-1], tuple(segs), generator, epsilon)

    @classmethod
    def from_function(cls, T: float, h: float, fn: Callable, label: str = "control") -> "ControlSignal":
        g = grid_function(0.0, T, h, fn)
        return cls(T, (Segment(0.0, T, g, label),))

    @classmethod
    def zero(cls, T: float, h: float) -> "ControlSignal":
        return cls.from_function(T, h, lambda t: np.zeros_like(t), "zero")
