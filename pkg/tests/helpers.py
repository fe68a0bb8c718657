"""Problem factories shared by the test modules."""

import numpy as np

from delaycontrol import DelayEquation, GridFunction, InitialState, RetardedSystem
from delaycontrol.core import grid_function

OMEGA = 0.56714329040978387  # W(1), mpmath.lambertw(1)
COTH_HALF = 2.1639534137386528  # coth(0.5), mpmath


def zero_fn(t):
    return np.zeros_like(t)


def scalar_state(y, x0, dx0=None, h=1e-3):
    return InitialState.from_functions(y, x0, dx0, h=h)


def worked_state(h=1e-3):
    """y = 1, x0 = 0: the textbook example for x' = x(t - 1) + u."""
    return scalar_state(1.0, zero_fn, h=h)


def random_scalar_configs(n=20, seed=2024):
    """Random equations with N <= 3 and |coefficients| <= 2, alternating retarded / neutral.

    Delays and eps are multiples of 0.05 so that every grid used in the tests
    (h = 1e-3, 5e-4, 2.5e-4) is commensurate; eps never exceeds the smallest gap.
    Returns ``[(equation, make_state(h), eps)]``.
    """
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        N = int(rng.integers(1, 4))
        inner = np.sort(rng.choice(np.arange(5, 20), size=N - 1, replace=False)) * 0.05
        delays = np.concatenate([[0.0], inner, [1.0]])
        gap = np.min(np.diff(delays))
        # eps <= smallest gap, eps < r_1, eps <= 0.3
        top = int(round(min(gap, 0.3) / 0.05))
        if top * 0.05 >= delays[1] - 1e-12:
            top -= 1
        eps = 0.05 * int(rng.integers(1, top + 1))
        a = rng.uniform(-2, 2, N + 1)
        neutral = i % 2 == 1
        if neutral:
            d = rng.uniform(-2, 2, N)
            if abs(d[-1]) < 0.2:
                d[-1] = 0.2 * np.sign(d[-1] or 1.0)
        else:
            d = np.zeros(N)
        eq = DelayEquation(tuple(np.round(delays, 10)), tuple(a), tuple(d))
        coef = rng.uniform(-1, 1, 4)
        poly = np.polynomial.Polynomial(coef)
        y_free = float(rng.uniform(-1, 1))

        def make_state(h, poly=poly, neutral=neutral, y_free=y_free):
            if neutral:
                return scalar_state(poly(0.0), poly, poly.deriv(), h=h)
            return scalar_state(y_free, poly, h=h)

        out.append((eq, make_state, round(eps, 10)))
    return out


def random_companion_configs(n=10, seed=77):
    """Companion systems with n in {1, 2, 3} and states with smooth histories."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        dim = 1 + i % 3
        g = rng.uniform(-1.5, 1.5, dim)
        y = rng.uniform(-1, 1, dim)
        freq = rng.uniform(0.5, 3.0, dim)
        phase = rng.uniform(0, np.pi, dim)
        eps = [0.2, 0.25, 0.3, 0.4][i % 4]

        def make_state(h, y=y, freq=freq, phase=phase):
            x0 = grid_function(-1.0, 0.0, h, lambda t: np.cos(np.multiply.outer(t, freq) + phase))
            return InitialState(y, x0)

        out.append((RetardedSystem.companion(g), make_state, eps))
    return out


def vector_state(y, x0_fn, h=1e-3):
    return InitialState(np.asarray(y, dtype=float), grid_function(-1.0, 0.0, h, x0_fn))


def zero_vector_state(n, h=1e-3):
    M = int(round(1 / h))
    return InitialState(np.zeros(n), GridFunction(-1.0, 0.0, np.zeros((M + 1, n))))
