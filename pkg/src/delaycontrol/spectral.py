"""Characteristic quasipolynomial, its zeros, and orthogonality witnesses.

For ``x' + sum d_k x'(t - r_k) = sum a_k x(t - r_k)`` the characteristic
function is ``D(z) = iz E(z) - A(z)`` with ``beta_k = 1 - r_k``::

    E(z) = e^{iz} + sum_{k>=1} d_k e^{i beta_k z},   A(z) = sum_{k>=0} a_k e^{i beta_k z}

so that ``e^{izt}`` is a free solution exactly when ``D(z) = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import (
    ControlSignal,
    DelayEquation,
    GridFunction,
    InitialState,
    RetardedSystem,
    controllability_matrix,
    grid_function,
    steps,
)
from .exceptions import NotAZero, ZeroSearchError
from .simulation import simulate

__all__ = [
    "char_function",
    "char_derivative",
    "Spectrum",
    "default_window",
    "localization",
    "argument_count",
    "find_zeros",
    "newton_polish",
    "mode_check",
    "OrthoWitness",
    "ortho_complement_fn",
    "sine_witness",
    "witness_inner",
    "verify_characteristic_membership",
    "spectral_controllability",
    "to_companion",
    "companion_transform",
]

_BOUNDARY_TOL = 1e-8
_NEWTON_TOL = 1e-12
_MULTIPLICITY_TOL = 1e-8


def _parts(eq: DelayEquation):
    beta = 1.0 - np.asarray(eq.delays)
    a = np.asarray(eq.a_coeffs, dtype=float)
    d = np.concatenate([[1.0], eq.d_coeffs])  # e^{iz} enters E with weight 1 (beta_0 = 1)
    return beta, a, d


def char_function(eq: DelayEquation, z):
    """``D(z)``; accepts scalars or arrays."""
    beta, a, d = _parts(eq)
    z = np.asarray(z, dtype=complex)
    ex = np.exp(1j * np.multiply.outer(z, beta))
    E = ex @ d
    A = ex @ a
    return (1j * z * E - A)[()]


def char_derivative(eq: DelayEquation, z):
    """``D'(z) = i E + iz E' - A'``."""
    beta, a, d = _parts(eq)
    z = np.asarray(z, dtype=complex)
    ex = np.exp(1j * np.multiply.outer(z, beta))
    E = ex @ d
    dE = ex @ (1j * beta * d)
    dA = ex @ (1j * beta * a)
    return (1j * E + 1j * z * dE - dA)[()]


def localization(eq: DelayEquation) -> dict:
    """Where the zeros can lie.

    Retarded: ``Im z >= -sum |a_k|`` (rigorous). Neutral: the strip
    ``|Im z| <= S`` with ``S = 2 + ln((sum|a| + sum|d| + 1) / |d_N|)``; this
    constant over-covers and is reported, never relied on.
    """
    sa = float(np.sum(np.abs(eq.a_coeffs)))
    if eq.is_neutral():
        sd = float(np.sum(np.abs(eq.d_coeffs)))
        S = 2.0 + np.log((sa + sd + 1.0) / abs(eq.d_coeffs[-1]))
        return {"kind": "strip", "bound": float(S), "text": f"neutral: zeros in the strip |Im z| <= {S:.6g}"}
    return {"kind": "half-plane", "bound": -sa, "text": f"retarded: zeros in the half-plane Im z >= {-sa:.6g}"}


def default_window(eq: DelayEquation) -> tuple:
    """``(re_min, re_max, im_min, im_max)`` with ``|Re z| <= 20 pi``."""
    R = 20 * np.pi
    loc = localization(eq)
    if loc["kind"] == "strip":
        S = loc["bound"]
        return (-R, R, -S, S)
    sa = -loc["bound"]
    # zeros of a retarded equation rise like log|z|; cover that height with margin
    top = 2.0 + np.log(1.0 + R * (1.0 + sa))
    return (-R, R, -sa - 0.5, top)


def _edge_phase(eq, z0, z1, n0=64, max_rounds=40):
    """Unwrapped phase change and sampled points of D along the segment z0 -> z1."""
    s = np.linspace(0.0, 1.0, n0 + 1)
    for _ in range(max_rounds):
        z = z0 + s * (z1 - z0)
        D = char_function(eq, z)
        if np.min(np.abs(D)) < _BOUNDARY_TOL:
            raise _BoundaryHit()
        inc = np.angle(D[1:] / D[:-1])
        bad = np.abs(inc) > 0.5
        if not np.any(bad):
            return float(np.sum(inc)), z, D
        mids = 0.5 * (s[:-1] + s[1:])[bad]
        s = np.sort(np.concatenate([s, mids]))
    raise ZeroSearchError("phase unwrapping did not resolve along an edge")


class _BoundaryHit(Exception):
    pass


def _contour(eq, box):
    x0, x1, y0, y1 = box
    corners = [complex(x0, y0), complex(x1, y0), complex(x1, y1), complex(x0, y1)]
    total = 0.0
    zs, Ds = [], []
    for k in range(4):
        dphi, z, D = _edge_phase(eq, corners[k], corners[(k + 1) % 4])
        total += dphi
        zs.append(z[:-1])
        Ds.append(D[:-1])
    zs.append(zs[0][:1])
    Ds.append(Ds[0][:1])
    return total, np.concatenate(zs), np.concatenate(Ds)


def argument_count(eq: DelayEquation, box) -> int:
    """Number of zeros inside ``box`` by the argument principle (boundary must avoid zeros)."""
    try:
        total, _, _ = _contour(eq, box)
    except _BoundaryHit as exc:
        raise ZeroSearchError("a zero lies on the contour") from exc
    return _snap(total)


def _snap(total: float) -> int:
    count = total / (2 * np.pi)
    k = int(round(count))
    if abs(count - k) > 1e-3:
        raise ZeroSearchError(f"argument-principle count {count:.6f} is not an integer")
    return k


def newton_polish(eq: DelayEquation, z: complex, tol: float = _NEWTON_TOL, max_iter: int = 60) -> complex:
    for _ in range(max_iter):
        D = char_function(eq, z)
        dD = char_derivative(eq, z)
        if dD == 0:
            raise ZeroSearchError("vanishing derivative during Newton")
        step = D / dD
        z = z - step
        if abs(step) <= 1e-15 * max(1.0, abs(z)) or abs(char_function(eq, z)) <= tol:
            # one extra step for idempotence
            dD = char_derivative(eq, z)
            z = z - char_function(eq, z) / dD
            return complex(z)
    raise ZeroSearchError(f"Newton did not converge from {z}")


@dataclass(frozen=True)
class Spectrum:
    zeros: np.ndarray
    residual: np.ndarray
    multiplicity_flag: np.ndarray
    window: tuple
    count: int
    localization: dict = field(default_factory=dict)

    def lowest(self, k: int) -> np.ndarray:
        return self.zeros[np.argsort(np.abs(self.zeros), kind="stable")][:k]


def _nudged(box, k):
    x0, x1, y0, y1 = box
    dx = (x1 - x0) * 1e-3 * k * 0.618
    dy = (y1 - y0) * 1e-3 * k * 0.618
    return (x0 - dx, x1 + dx, y0 - dy, y1 + dy)


def _centroid(zs, Ds):
    """``(1/2 pi i) oint z dlog D`` from contour samples (valid when one zero is inside)."""
    dlog = np.log(np.abs(Ds[1:] / Ds[:-1])) + 1j * np.angle(Ds[1:] / Ds[:-1])
    zm = 0.5 * (zs[1:] + zs[:-1])
    return np.sum(zm * dlog) / (2j * np.pi)


def _search(eq, box, depth, found):
    if depth > 60:
        raise ZeroSearchError(f"subdivision depth exceeded near {box}")
    total, zs, Ds = _contour(eq, box)
    n = _snap(total)
    if n == 0:
        return
    x0, x1, y0, y1 = box
    if n == 1:
        guess = _centroid(zs, Ds)
        try:
            z = newton_polish(eq, guess)
        except ZeroSearchError:
            z = None
        pad = 1e-9 * max(1.0, abs(x1 - x0), abs(y1 - y0))
        if z is not None and x0 - pad <= z.real <= x1 + pad and y0 - pad <= z.imag <= y1 + pad:
            found.append(z)
            return
    _split(eq, box, depth, found)


def _split(eq, box, depth, found):
    x0, x1, y0, y1 = box
    # slightly off-centre cut so that symmetric spectra do not sit on it
    for k in range(10):
        frac = 0.5 + 0.0137 * (k + 1) * (-1) ** k
        try:
            if x1 - x0 >= y1 - y0:
                xm = x0 + frac * (x1 - x0)
                halves = [(x0, xm, y0, y1), (xm, x1, y0, y1)]
            else:
                ym = y0 + frac * (y1 - y0)
                halves = [(x0, x1, y0, ym), (x0, x1, ym, y1)]
            for hb in halves:
                _contour(eq, hb)
        except _BoundaryHit:
            continue
        for hb in halves:
            _search(eq, hb, depth + 1, found)
        return
    raise ZeroSearchError(f"could not place a cut avoiding zeros in {box}")


def find_zeros(eq: DelayEquation, window: Optional[Sequence[float]] = None) -> Spectrum:
    """All zeros of ``D`` in the rectangle ``(re_min, re_max, im_min, im_max)``."""
    box = tuple(float(v) for v in (window if window is not None else default_window(eq)))
    if not (box[1] > box[0] and box[3] > box[2]):
        raise ValueError(f"degenerate window {box}")
    for k in range(11):
        cand = box if k == 0 else _nudged(box, k)
        try:
            total, _, _ = _contour(eq, cand)
        except _BoundaryHit:
            continue
        box = cand
        break
    else:
        raise ZeroSearchError("window boundary passes through zeros after 10 nudges")
    count = _snap(total)
    found: list = []
    _search(eq, box, 0, found)
    zeros = np.array(sorted(found, key=lambda z: (round(z.real, 9), z.imag)), dtype=complex)
    if len(zeros) > 1:
        gaps = np.abs(zeros[:, None] - zeros[None, :])
        np.fill_diagonal(gaps, np.inf)
        if np.min(gaps) < 1e-6:
            raise ZeroSearchError("duplicate zeros returned by the subdivision")
    if len(zeros) != count:
        raise ZeroSearchError(f"found {len(zeros)} zeros but the contour counts {count}")
    res = np.abs(char_function(eq, zeros)) if len(zeros) else np.zeros(0)
    dres = np.abs(char_derivative(eq, zeros)) if len(zeros) else np.zeros(0)
    return Spectrum(zeros, np.atleast_1d(res), np.atleast_1d(dres) <= _MULTIPLICITY_TOL, box, count, localization(eq))


def mode_check(
    eq: DelayEquation,
    z: complex,
    epsilon: float = 0.5,
    h: float = 1e-4,
    check_zero: bool = True,
    amplitude: complex = 1.0,
) -> float:
    """Max node deviation on ``[0, 1 + eps]`` between the free solution from
    ``(amplitude, amplitude e^{izt})`` and ``amplitude e^{izt}``.

    With ``check_zero=False`` any ``z`` is accepted (negative controls).
    """
    if check_zero and abs(char_function(eq, z)) > 1e-10:
        raise NotAZero(f"|D({z})| = {abs(char_function(eq, z)):.3g} > 1e-10")
    mode = lambda t: amplitude * np.exp(1j * z * t)
    dmode = lambda t: amplitude * 1j * z * np.exp(1j * z * t)
    state = InitialState.from_functions(complex(amplitude), mode, dmode, h=h)
    traj = simulate(eq, state, None, 1.0 + epsilon)
    seg = traj.window(0.0, 1.0 + epsilon)
    return float(np.max(np.abs(seg.samples - mode(seg.t))))


# ---------------------------------------------------------------------------
# witnesses of the orthogonal complement


@dataclass(frozen=True, eq=False)
class OrthoWitness:
    """Seed ``q`` on ``[0, eps]`` and the function ``f`` on ``[0, T]`` built from it.

    ``pieces[k]`` is ``a_k q + d_k q'`` (``d_0 = 1``) and sits on
    ``[1 - r_k, 1 - r_k + eps]``. ``f.samples`` averages the one-sided limits
    at nodes where pieces start or stop, so the global trapezoid rule equals
    the piecewise one.
    """

    q: GridFunction
    f: GridFunction
    pieces: tuple
    offsets: tuple

    def norm(self) -> float:
        return float(np.sqrt(sum(np.sum(p.weights() * np.abs(p.samples) ** 2) for p in self.pieces)))


def ortho_complement_fn(eq: DelayEquation, q: GridFunction, epsilon: float, q_deriv: Optional[GridFunction] = None) -> OrthoWitness:
    h = q.h
    if abs(q.t_start) > 1e-12 or abs(q.t_end - epsilon) > 1e-9:
        raise ValueError("q must live on [0, eps]")
    scale = max(1.0, q.sup())
    if abs(q.samples[0]) > 1e-12 * scale or abs(q.samples[-1]) > 1e-12 * scale:
        raise ValueError("q must vanish at both ends of [0, eps]")
    eq.check_epsilon(epsilon)
    dq = q.derivative() if q_deriv is None else q_deriv
    d = (1.0,) + eq.d_coeffs
    T = 1.0 + epsilon
    n = steps(T, h)
    ne = steps(epsilon, h)
    dtype = np.result_type(q.samples.dtype, float)
    left = np.zeros(n + 1, dtype=dtype)
    right = np.zeros(n + 1, dtype=dtype)
    pieces, offsets = [], []
    for k in range(eq.N + 1):
        p = eq.a_coeffs[k] * q.samples + d[k] * dq.samples
        off = 1.0 - eq.delays[k]
        i0 = steps(off, h)
        right[i0:i0 + ne] += p[:-1]
        left[i0 + 1:i0 + ne + 1] += p[1:]
        pieces.append(q.with_samples(p))
        offsets.append(off)
    samples = 0.5 * (left + right)
    samples[0] = right[0]
    samples[-1] = left[-1]
    f = GridFunction(0.0, T, samples)
    return OrthoWitness(q, f, tuple(pieces), tuple(offsets))


def sine_witness(epsilon: float, h: float, rng: np.random.Generator, terms: int = 8):
    """Random ``q = sum_m c_m sin(m pi t / eps)`` with standard normal ``c_m``.

    Returns ``(q, q')``. The derivative is the term-by-term derivative of the
    series; centred differences would add an ``O((h m pi / eps)^2)`` error that
    swamps the orthogonality test for short generators.
    """
    coef = rng.standard_normal(terms)
    w = np.arange(1, terms + 1) * np.pi / epsilon

    def q(t):
        return np.sin(np.multiply.outer(t, w)) @ coef

    def dq(t):
        return np.cos(np.multiply.outer(t, w)) @ (coef * w)

    g = grid_function(0.0, epsilon, h, q)
    # sin(m pi) is not exactly 0 in floating point
    s = np.array(g.samples, copy=True)
    s[0] = s[-1] = 0.0
    return g.with_samples(s), grid_function(0.0, epsilon, h, dq)


def witness_inner(control: ControlSignal, witness: OrthoWitness) -> float:
    """``<u(T - t), f>`` evaluated piece by piece.

    Piece ``k`` of ``f`` sits on ``[1 - r_k, 1 - r_k + eps]``; under the time
    reversal it meets ``u`` on ``[r_k, r_k + eps]``.
    """
    T = control.horizon
    h = control.h
    um, up = control.node_limits()
    total = 0.0
    for p, off in zip(witness.pieces, witness.offsets):
        # u(T - off - sigma) for sigma in [0, eps] runs over [r_k, r_k + eps] backwards
        lo = T - off - p.t_end
        i0 = steps(lo, h)
        ne = p.M
        seg = np.array(up[i0:i0 + ne + 1], copy=True)
        seg[-1] = um[i0 + ne]
        total += np.sum(p.weights() * seg[::-1] * p.samples)
    return float(np.real(total))


def verify_characteristic_membership(
    eq: DelayEquation,
    state: InitialState,
    epsilon: float,
    num_witnesses: int = 20,
    seed: int = 0,
    generator: Optional[GridFunction] = None,
) -> dict:
    """Largest normalized product ``|<u(T - t), f>| / (|u| |f|)`` over random witnesses.

    Uses the optimal control unless an alternative feasible `generator` is given.
    """
    from .admissible import assemble_control
    from .optimal import optimal_control

    if generator is None:
        control = optimal_control(eq, state, epsilon).control
    else:
        control = assemble_control(eq, state, generator)
    unorm = control.norm()
    rng = np.random.default_rng(seed)
    products = []
    for _ in range(num_witnesses):
        q, dq = sine_witness(epsilon, state.h, rng)
        w = ortho_complement_fn(eq, q, epsilon, dq)
        ip = witness_inner(control, w)
        denom = unorm * w.norm()
        products.append(0.0 if denom == 0.0 else abs(ip) / denom)
    return {
        "max_normalized_product": float(max(products)) if products else 0.0,
        "products": [float(p) for p in products],
        "witnesses": num_witnesses,
        "seed": seed,
    }


# ---------------------------------------------------------------------------
# systems


def spectral_controllability(sys_or_A, b=None, probe_zeros: Sequence[complex] = ()) -> bool:
    """Controllability of ``(A, b)``, plus ``rank [iz e^{iz} I - A | b] = n`` at each probe."""
    if isinstance(sys_or_A, RetardedSystem):
        A, bvec = sys_or_A.A, sys_or_A.b
    else:
        A = np.array(sys_or_A, dtype=float, ndmin=2)
        bvec = np.asarray(b, dtype=float).reshape(-1)
    n = len(bvec)
    if np.linalg.matrix_rank(controllability_matrix(A, bvec)) < n:
        return False
    for z in probe_zeros:
        Mz = np.hstack([1j * z * np.exp(1j * z) * np.eye(n) - A, bvec[:, None]])
        sv = np.linalg.svd(Mz, compute_uv=False)
        if sv[-1] <= 1e-10 * sv[0]:
            return False
    return True


def companion_transform(sys: RetardedSystem):
    """``(companion system, G)`` with ``G A G^{-1}`` in companion form and ``G b = e_1``."""
    A, b = np.asarray(sys.A), np.asarray(sys.b)
    n = len(b)
    WA = controllability_matrix(A, b)
    if np.linalg.matrix_rank(WA) < n:
        raise ValueError("pair (A, b) is not controllable")
    g = np.poly(A)[1:].real
    comp = RetardedSystem.companion(g)
    WC = controllability_matrix(comp.A, comp.b)
    G = np.linalg.solve(WA.T, WC.T).T
    return comp, G


def to_companion(sys: RetardedSystem) -> RetardedSystem:
    return companion_transform(sys)[0]
