"""Verification checks shared by the CLI ``verify`` command and the acceptance tests.

Each check returns a :class:`CheckResult` with the measured value and the
threshold it was compared against.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .admissible import (
    assemble_control,
    assemble_system_control,
    moment_constraints,
    project_generator,
    system_moment_constraints,
)
from .core import DelayEquation, GridFunction, RetardedSystem
from .optimal import optimal_control
from .oracle import kkt_solve, scalar_program, system_program
from .simulation import null_residual, simulate, simulate_system
from .spectral import verify_characteristic_membership

__all__ = [
    "CheckResult",
    "relative_l2",
    "random_generator",
    "check_null",
    "check_oracle",
    "check_ortho",
    "check_monotone",
    "check_optimality",
    "CHECKS",
]

NULL_TOL = 1e-4
ORACLE_TOL = 1e-3
ORTHO_TOL = 1e-5
MONOTONE_EPS = (0.5, 0.4, 0.3, 0.2, 0.1)


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        extra = f" ({self.detail})" if self.detail else ""
        return f"{tag} {self.name}: value={self.value:.6g} threshold={self.threshold:.3g}{extra}"

    def as_dict(self) -> dict:
        return asdict(self)


def relative_l2(u: GridFunction, ref: GridFunction) -> float:
    nr = ref.norm()
    diff = (u - ref).norm()
    return diff if nr == 0.0 else diff / nr


def random_generator(constraints, rng: np.random.Generator, terms: int = 6, scale: float = 1.0) -> GridFunction:
    """Random smooth generator projected onto the moment constraints."""
    grid = constraints.grid
    s = (grid.t - grid.t_start) / (grid.t_end - grid.t_start)
    coef = rng.standard_normal(terms) * scale
    base = sum(c * np.cos(np.pi * k * s) for k, c in enumerate(coef))
    return project_generator(constraints, grid.with_samples(base))


def _is_system(problem) -> bool:
    return isinstance(problem.model, RetardedSystem)


def _control_for(problem, generator: Optional[GridFunction]):
    if generator is None:
        return optimal_control(problem.model, problem.state, problem.epsilon).control
    if _is_system(problem):
        return assemble_system_control(problem.model, problem.state, generator, tol=None)
    return assemble_control(problem.model, problem.state, generator, tol=None)


def check_null(problem, generator: Optional[GridFunction] = None, tol: float = NULL_TOL) -> CheckResult:
    """Simulate under the optimal control (or the given generator's admissible extension)."""
    u = _control_for(problem, generator)
    T = u.horizon
    if _is_system(problem):
        traj = simulate_system(problem.model, problem.state, u, T)
    else:
        traj = simulate(problem.model, problem.state, u, T)
    r = null_residual(traj, T)
    return CheckResult("null", r <= tol, r, tol, f"max |x| on [{T - 1:g}, {T:g}]")


def check_oracle(problem, tol: float = ORACLE_TOL) -> CheckResult:
    sol = optimal_control(problem.model, problem.state, problem.epsilon)
    if _is_system(problem):
        qp = system_program(problem.model, problem.state, problem.epsilon)
    else:
        qp = scalar_program(problem.model, problem.state, problem.epsilon)
    ref = kkt_solve(qp)
    if ref.norm() == 0.0 and sol.generator.norm() == 0.0:
        return CheckResult("oracle", True, 0.0, tol, "zero state")
    d = relative_l2(sol.generator, ref)
    return CheckResult("oracle", d <= tol, d, tol, "relative L2 distance to the KKT minimizer")


def check_ortho(problem, seed: int = 0, witnesses: int = 20, tol: float = ORTHO_TOL) -> CheckResult:
    if _is_system(problem):
        return CheckResult("ortho", True, 0.0, tol, "skipped: scalar equations only")
    rep = verify_characteristic_membership(problem.model, problem.state, problem.epsilon, witnesses, seed)
    v = rep["max_normalized_product"]
    return CheckResult("ortho", v <= tol, v, tol, f"{witnesses} witnesses, seed {seed}")


def _valid_eps(problem):
    if _is_system(problem):
        return [e for e in MONOTONE_EPS if 0 < e < 1]
    eq: DelayEquation = problem.model
    out = []
    for e in MONOTONE_EPS:
        try:
            eq.check_epsilon(e)
        except ValueError:
            continue
        out.append(e)
    return out


def check_monotone(problem, margin: float = 1e-10) -> CheckResult:
    """Minimum energy strictly decreasing in eps; ``E(eps) sqrt(eps)`` below ten times its value at the largest eps."""
    eps = _valid_eps(problem)
    if len(eps) < 2:
        return CheckResult("monotone", True, 0.0, margin, "fewer than two admissible eps values")
    energies = [optimal_control(problem.model, problem.state, e).energy for e in eps]
    if max(energies) == 0.0:
        return CheckResult("monotone", True, 0.0, margin, "zero state")
    steps_up = [e2 - e1 for e1, e2 in zip(energies, energies[1:])]
    # the sqrt(eps) growth shape is a scalar-equation estimate; systems blow up faster
    growth = [E * np.sqrt(e) for E, e in zip(energies, eps)]
    bounded = _is_system(problem) or max(growth) <= 10 * growth[0]
    ok = min(steps_up) > margin and bounded
    growth_note = "growth bound not applied to systems" if _is_system(problem) else f"growth bound ok={bounded}"
    return CheckResult("monotone", ok, min(steps_up), margin, f"eps={eps}, {growth_note}")


def check_optimality(problem, samples: int = 100, seed: int = 0, strict: float = 1e-4) -> CheckResult:
    """The optimal energy is no larger than that of random admissible alternatives."""
    sol = optimal_control(problem.model, problem.state, problem.epsilon)
    if _is_system(problem):
        cons = system_moment_constraints(problem.model, problem.state, problem.epsilon)
    else:
        cons = moment_constraints(problem.model, problem.state, problem.epsilon)
    rng = np.random.default_rng(seed)
    scale = max(1.0, sol.generator.sup())
    worst = np.inf
    for _ in range(samples):
        g = random_generator(cons, rng, scale=scale)
        e = _control_for(problem, g).energy()
        gap = e - sol.energy
        dist = (g - sol.generator).norm()
        if gap < -1e-9 * max(1.0, sol.energy) or (dist >= strict and gap <= 0.0):
            return CheckResult("optimality", False, gap, 0.0, "alternative with lower or equal energy found")
        worst = min(worst, gap)
    return CheckResult("optimality", True, float(worst), 0.0, f"smallest energy gap over {samples} alternatives")


CHECKS = {
    "null": check_null,
    "oracle": check_oracle,
    "ortho": check_ortho,
    "monotone": check_monotone,
    "optimality": check_optimality,
}
