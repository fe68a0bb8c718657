"""scikit-learn style wrapper around the functional API.

``fit`` takes an initial state (the "data" of a control problem) and solves
for the minimum-energy control; ``predict`` evaluates that control at given
times; ``transform`` returns the simulated trajectory. Hyperparameters are
the problem itself and ``epsilon``, so ``get_params``/``set_params``/``clone``
work as usual.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .core import DelayEquation, InitialState, RetardedSystem, validate_state
from .optimal import optimal_control
from .simulation import null_residual, simulate, simulate_system

__all__ = ["MinimumEnergyController", "check_state"]


def check_state(problem, state) -> InitialState:
    """Input validation for estimator calls."""
    if not isinstance(state, InitialState):
        raise TypeError(f"expected an InitialState, got {type(state).__name__}")
    if isinstance(problem, DelayEquation):
        return validate_state(problem, state)
    if isinstance(problem, RetardedSystem):
        if state.dim != problem.dim:
            raise ValueError(f"state dimension {state.dim} does not match the system ({problem.dim})")
        return state
    raise TypeError(f"problem must be a DelayEquation or RetardedSystem, got {type(problem).__name__}")


class MinimumEnergyController(BaseEstimator):
    """Minimum-energy null control for one equation or companion system.

    Parameters
    ----------
    problem : DelayEquation or RetardedSystem
    epsilon : float
        Length of the free generator interval; the horizon is ``1 + epsilon``
        (``n + epsilon`` for systems).
    """

    def __init__(self, problem=None, epsilon=0.5):
        self.problem = problem
        self.epsilon = epsilon

    def fit(self, state, y=None):
        state = check_state(self.problem, state)
        sol = optimal_control(self.problem, state, self.epsilon)
        self.state_ = state
        self.solution_ = sol
        self.generator_ = sol.generator
        self.control_ = sol.control
        self.energy_ = sol.energy
        self.constants_ = sol.constants
        self.horizon_ = sol.horizon
        return self

    def predict(self, t):
        """Optimal control values at times `t` (left-closed at breakpoints)."""
        check_is_fitted(self, "control_")
        return self.control_(np.asarray(t, dtype=float))

    def transform(self, state=None):
        """Trajectory driven by the fitted control (from the fitted state by default)."""
        check_is_fitted(self, "control_")
        state = self.state_ if state is None else check_state(self.problem, state)
        if isinstance(self.problem, RetardedSystem):
            return simulate_system(self.problem, state, self.control_, self.horizon_)
        return simulate(self.problem, state, self.control_, self.horizon_)

    def score(self, state=None, y=None) -> float:
        """Negative null residual at the horizon (higher is better)."""
        return -null_residual(self.transform(state), self.horizon_)
