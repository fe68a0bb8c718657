import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from delaycontrol import (
    DelayEquation,
    MultipleRootUnsupported,
    RetardedSystem,
    energy_curve,
    kkt_solve,
    null_residual,
    optimal_control,
    optimal_neutral,
    optimal_retarded,
    optimal_simplest,
    optimal_system,
    simulate,
    simulate_system,
)
from delaycontrol.checks import relative_l2
from delaycontrol.optimal import power_resolvent, resolvent_kernel, transform_state
from delaycontrol.oracle import scalar_program, system_program
from delaycontrol.spectral import companion_transform

from helpers import COTH_HALF, random_scalar_configs, scalar_state, vector_state, worked_state, zero_fn, zero_vector_state

# coth(eps) from mpmath: the minimum energy of the worked example
COTH = {
    0.5: 2.1639534137386528,
    0.4: 2.6319324418321882,
    0.3: 3.4327384303217417,
    0.25: 4.0829881650735966,
    0.2: 5.0664895634394724,
    0.1: 10.033311132253989,
}


def test_zero_state_gives_zero_control():
    sol = optimal_simplest(1.0, scalar_state(0.0, zero_fn), 0.5)
    assert sol.energy == 0.0
    assert np.all(sol.generator.samples == 0.0)
    eq = DelayEquation((0.0, 0.5, 1.0), (0.1, 1.0, 1.0), (0.2, 0.3))
    assert optimal_neutral(eq, scalar_state(0.0, zero_fn, zero_fn), 0.25).energy == 0.0
    sys_sol = optimal_system(RetardedSystem.companion([1.0, 1.0]), zero_vector_state(2), 0.3)
    assert sys_sol.energy == 0.0 and np.all(sys_sol.constants == 0.0)


def test_worked_example_closed_form():
    sol = optimal_simplest(1.0, worked_state(), 0.5)
    t = sol.generator.t
    exact = np.sinh(t) - COTH_HALF * np.cosh(t)
    assert np.max(np.abs(sol.generator.samples - exact)) < 1e-6
    assert sol.constants[0] == pytest.approx(-COTH_HALF, abs=1e-6)
    assert sol.generator.integrate() == pytest.approx(-1.0, abs=1e-8)


@pytest.mark.parametrize("eps", sorted(COTH))
def test_worked_example_energy_is_coth(eps):
    assert optimal_simplest(1.0, worked_state(), eps).energy == pytest.approx(COTH[eps], rel=1e-6)


def test_worked_example_matches_kkt():
    h = 2.5e-4
    state = worked_state(h)
    sol = optimal_simplest(1.0, state, 0.5)
    ref = kkt_solve(scalar_program(DelayEquation.simplest(1.0), state, 0.5))
    assert relative_l2(sol.generator, ref) <= 1e-3


def test_neutral_without_derivative_delays_is_simplest():
    state = scalar_state(0.7, np.sin)
    a = optimal_simplest(1.3, state, 0.4)
    b = optimal_neutral(DelayEquation((0.0, 1.0), (0.0, 1.3), (0.0,)), state, 0.4)
    assert np.max(np.abs(a.generator.samples - b.generator.samples)) <= 1e-10


def test_neutral_example_nulls_and_matches_kkt():
    eq = DelayEquation((0.0, 1.0), (0.0, 1.0), (0.5,))
    state = scalar_state(1.0, lambda t: 1 + t, lambda t: np.ones_like(t))
    sol = optimal_neutral(eq, state, 0.3)
    assert sol.moment_residual() <= 1e-8
    assert null_residual(simulate(eq, state, sol.control, 1.3), 1.3) <= 1e-4
    ref = kkt_solve(scalar_program(eq, state, 0.3))
    assert relative_l2(sol.generator, ref) <= 1e-3


@pytest.mark.parametrize("idx", [0, 2, 4, 6])
def test_retarded_formula_is_neutral_formula_with_zero_d(idx):
    eq, make_state, eps = random_scalar_configs()[idx]
    state = make_state(1e-3)
    a = optimal_retarded(eq, state, eps)
    b = optimal_neutral(eq, state, eps)
    assert np.max(np.abs(a.generator.samples - b.generator.samples)) <= 1e-12


def test_two_delay_retarded_example_matches_kkt():
    eq = DelayEquation((0.0, 0.5, 1.0), (0.0, 1.0, 1.0))
    state = worked_state(2.5e-4)
    sol = optimal_retarded(eq, state, 0.25)
    assert relative_l2(sol.generator, kkt_solve(scalar_program(eq, state, 0.25))) <= 1e-3


def test_optimal_retarded_rejects_neutral_equation():
    eq = DelayEquation((0.0, 1.0), (0.0, 1.0), (0.5,))
    with pytest.raises(ValueError):
        optimal_retarded(eq, scalar_state(1.0, np.ones_like, zero_fn), 0.3)


@settings(max_examples=10, deadline=None)
@given(st.floats(-3, 3).filter(lambda v: abs(v) > 1e-3))
def test_generator_scales_with_state(alpha):
    eq, make_state, eps = random_scalar_configs()[5]
    state = make_state(1e-3)
    a = optimal_control(eq, state, eps)
    b = optimal_control(eq, state.scaled(alpha), eps)
    assert np.allclose(b.generator.samples, alpha * a.generator.samples, rtol=1e-9, atol=1e-9)
    assert b.energy == pytest.approx(alpha**2 * a.energy, rel=1e-9)


def test_generator_solves_integral_equation():
    # for x' = x(t - 1) + u with x~ = 1 the generator satisfies u0 - t * u0 = t + c
    sol = optimal_simplest(1.0, worked_state(), 0.5)
    u0 = sol.generator
    t = u0.t
    conv = np.array([np.trapezoid((ti - t[: i + 1]) * u0.samples[: i + 1], t[: i + 1]) for i, ti in enumerate(t)])
    resid = u0.samples - conv - (t + sol.constants[0])
    assert np.max(np.abs(resid)) < 1e-6


def test_energy_curve_decreases_in_eps():
    curve = energy_curve(DelayEquation.simplest(1.0), worked_state(), [0.5, 0.25, 0.1])
    energies = [e for _, e in curve]
    assert energies[0] < energies[1] < energies[2]
    assert energies == pytest.approx([COTH[0.5], COTH[0.25], COTH[0.1]], rel=1e-6)
    scaled = [e * np.sqrt(eps) for eps, e in curve]
    assert max(scaled) <= 10 * scaled[0]
    assert all(e == 0.0 for _, e in energy_curve(DelayEquation.simplest(1.0), scalar_state(0.0, zero_fn), [0.5, 0.2]))


def test_unrefined_constant_converges_at_second_order():
    eq, make_state, eps = random_scalar_configs()[7]
    res = []
    for h in (1e-3, 5e-4):
        state = make_state(h)
        sol = optimal_control(eq, state, eps, refine=False)
        res.append(null_residual(simulate(eq, state, sol.control, 1 + eps), 1 + eps))
    assert res[0] / res[1] == pytest.approx(4.0, rel=0.1)


@pytest.mark.parametrize("g1", [-1.0, 0.7, 2.0])
def test_one_dimensional_system_reduces_to_simplest(g1):
    h = 1e-3
    s = optimal_system(RetardedSystem.companion([g1]), vector_state([1.0], lambda t: np.cos(t)[:, None], h=h), 0.4)
    r = optimal_simplest(-g1, scalar_state(1.0, np.cos, h=h), 0.4)
    assert np.max(np.abs(s.generator.samples - r.generator.samples)) <= 1e-8


def test_resolvent_of_one_dimensional_system():
    # s^2 / (s^2 - g^2) = 1 + g^2 / (s^2 - g^2): kernel g sinh(g t)
    roots, res = resolvent_kernel([0.8])
    t = np.linspace(0, 1, 11)
    kern = np.real(sum(r * np.exp(lam * t) for lam, r in zip(roots, res)))
    assert np.allclose(kern, 0.8 * np.sinh(0.8 * t), atol=1e-14)


def test_power_resolvent_of_pure_cascade():
    # g = 0: the resolvent is the identity, so t^{j-1}/(j-1)! comes back
    t = np.linspace(0, 1, 11)
    assert np.allclose(power_resolvent([0.0, 0.0], 2, t), t)
    assert np.allclose(power_resolvent([0.0, 0.0], 1, t), 1.0)


def test_two_dimensional_system_example():
    h = 5e-4
    sys = RetardedSystem.companion([1.0, 1.0])
    state = vector_state([0.3, -0.8], lambda t: np.stack([np.sin(2 * t), np.cos(t)], axis=-1), h=h)
    sol = optimal_system(sys, state, 0.3)
    assert sol.moment_residual() <= 1e-8
    assert null_residual(simulate_system(sys, state, sol.control, 2.3), 2.3) <= 1e-4
    assert relative_l2(sol.generator, kkt_solve(system_program(sys, state, 0.3))) <= 1e-3


def test_repeated_resolvent_roots_are_rejected():
    # s^4 - 2 s^2 + 1 = (s^2 - 1)^2
    with pytest.raises(MultipleRootUnsupported):
        optimal_system(RetardedSystem.companion([np.sqrt(2.0), 1.0]), zero_vector_state(2), 0.3)


def test_general_system_goes_through_companion_form():
    rng = np.random.default_rng(5)
    A = rng.uniform(-1, 1, (2, 2))
    b = np.array([1.0, 0.5])
    sys = RetardedSystem(A, b)
    state = vector_state([1.0, -1.0], lambda t: np.stack([t, t**2], axis=-1))
    comp, G = companion_transform(sys)
    direct = optimal_control(sys, state, 0.3)
    via = optimal_system(comp, transform_state(state, G), 0.3)
    assert np.array_equal(direct.generator.samples, via.generator.samples)


def test_solution_summary_fields():
    summary = optimal_simplest(1.0, worked_state(), 0.5).summary()
    assert summary["kind"] == "simplest"
    assert summary["horizon"] == pytest.approx(1.5)
    assert summary["constants"][0] == pytest.approx(-2.16395, abs=1e-5)
