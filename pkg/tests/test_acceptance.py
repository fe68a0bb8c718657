"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``PASS``/``FAIL`` line (visible even under output
capture) with the measured value and the tolerance it was held to.
"""

import time
from pathlib import Path
from types import SimpleNamespace

import numpy as np
import pytest

from delaycontrol import (
    DelayEquation,
    RetardedSystem,
    char_function,
    find_zeros,
    kkt_solve,
    mode_check,
    moment_constraints,
    null_residual,
    optimal_control,
    optimal_neutral,
    optimal_retarded,
    optimal_simplest,
    optimal_system,
    simulate,
    to_companion,
    verify_characteristic_membership,
)
from delaycontrol.checks import check_optimality, random_generator, relative_l2
from delaycontrol.cli import main
from delaycontrol.oracle import scalar_program, system_program, volterra_generator
from delaycontrol.spectral import argument_count

from helpers import OMEGA, random_companion_configs, random_scalar_configs, scalar_state, vector_state, worked_state

pytestmark = pytest.mark.acceptance

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def scalar_cases():
    """The worked example followed by the 20 random configurations."""
    worked = (DelayEquation.simplest(1.0), worked_state, 0.5)
    return [worked] + random_scalar_configs()


@pytest.fixture
def report(capsys):
    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {title}: {detail}")
        return ok

    return emit


def test_criterion_01_null_controllability(report):
    start = time.perf_counter()
    coarse, ratios, refined = [], [], []
    for eq, make_state, eps in scalar_cases():
        T = 1.0 + eps
        res = []
        for h in (1e-3, 2.5e-4):
            state = make_state(h)
            sol = optimal_control(eq, state, eps, refine=False)
            res.append(null_residual(simulate(eq, state, sol.control, T), T))
        state = make_state(1e-3)
        refined.append(null_residual(simulate(eq, state, optimal_control(eq, state, eps).control, T), T))
        coarse.append(res[0])
        ratios.append(res[0] / res[1] if res[1] > 0 else np.inf)
    elapsed = time.perf_counter() - start
    ok = max(coarse) <= 1e-4 and max(refined) <= 1e-4 and min(ratios) >= 4.0 and elapsed <= 10.0
    detail = (
        f"max residual {max(coarse):.2e} (closed-form constant), {max(refined):.2e} (refined), "
        f"min improvement {min(ratios):.2f}x, {elapsed:.1f}s"
    )
    assert report(1, "null-controllability", ok, detail)


def test_criterion_02_kkt_oracle(report):
    start = time.perf_counter()
    h = 2.5e-4
    dists = []
    for eq, make_state, eps in scalar_cases():
        state = make_state(h)
        dists.append(relative_l2(optimal_control(eq, state, eps).generator, kkt_solve(scalar_program(eq, state, eps))))
    for sys, make_state, eps in random_companion_configs():
        state = make_state(h)
        dists.append(relative_l2(optimal_system(sys, state, eps).generator, kkt_solve(system_program(sys, state, eps))))
    elapsed = time.perf_counter() - start
    ok = max(dists) <= 1e-3 and elapsed <= 60.0
    assert report(2, "closed form vs KKT", ok, f"max relative L2 {max(dists):.2e} over {len(dists)} problems, {elapsed:.1f}s")


def test_criterion_03_volterra_oracle(report):
    dists = []
    for eq, make_state, eps in scalar_cases():
        state = make_state(1e-3)
        _, u = volterra_generator(eq, state, eps)
        dists.append(relative_l2(u, optimal_control(eq, state, eps).generator))
    ok = max(dists) <= 1e-3
    assert report(3, "Volterra route", ok, f"max relative L2 {max(dists):.2e} over {len(dists)} problems")


def test_criterion_04_optimality(report):
    failures, gaps = [], []
    problems = [SimpleNamespace(model=eq, state=ms(1e-3), epsilon=eps) for eq, ms, eps in scalar_cases()]
    problems += [SimpleNamespace(model=s, state=ms(1e-3), epsilon=eps) for s, ms, eps in random_companion_configs()]
    for i, prob in enumerate(problems):
        res = check_optimality(prob, samples=100, seed=i, strict=1e-4)
        gaps.append(res.value)
        if not res.passed:
            failures.append(i)
    ok = not failures
    detail = f"{len(problems)} problems x 100 alternatives, smallest gap {min(gaps):.3g}, failing {failures}"
    assert report(4, "optimality", ok, detail)


def test_criterion_05_moment_residuals(report):
    worst = 0.0
    count = 0
    for eq, make_state, eps in scalar_cases():
        for h in (1e-3, 2.5e-4):
            worst = max(worst, optimal_control(eq, make_state(h), eps).moment_residual())
            count += 1
    for sys, make_state, eps in random_companion_configs():
        for h in (1e-3, 2.5e-4):
            worst = max(worst, optimal_system(sys, make_state(h), eps).moment_residual())
            count += 1
    ok = worst <= 1e-8
    assert report(5, "moment residuals", ok, f"max |residual| {worst:.2e} over {count} generators")


def test_criterion_06_monotonicity(report):
    eps_list = [0.5, 0.4, 0.3, 0.2, 0.1]
    rng = np.random.default_rng(6)
    cases = [(1.0, worked_state())]
    for _ in range(5):
        a1 = float(rng.uniform(-2, 2))
        coef = rng.uniform(-1, 1, 3)
        poly = np.polynomial.Polynomial(coef)
        cases.append((a1, scalar_state(float(rng.uniform(-1, 1)), poly)))
    min_margin, worst_growth = np.inf, 0.0
    for a1, state in cases:
        energies = [optimal_simplest(a1, state, e).energy for e in eps_list]
        min_margin = min(min_margin, min(b - a for a, b in zip(energies, energies[1:])))
        growth = [E * np.sqrt(e) for E, e in zip(energies, eps_list)]
        worst_growth = max(worst_growth, max(growth) / growth[0])
    ok = min_margin > 1e-10 and worst_growth <= 10.0
    detail = f"{len(cases)} states, smallest increase {min_margin:.3g}, max E*sqrt(eps) ratio {worst_growth:.2f}"
    assert report(6, "monotonicity", ok, detail)


def test_criterion_07_spectrum(report):
    eq = DelayEquation.simplest(1.0)
    sp = find_zeros(eq)
    omega_hit = np.min(np.abs(sp.zeros + 1j * OMEGA))
    omega_res = abs(char_function(eq, sp.zeros[np.argmin(np.abs(sp.zeros + 1j * OMEGA))]))
    windows = [(-1.0, 1.0, -2.0, 1.0)]
    windows += [(2 * np.pi * k - np.pi, 2 * np.pi * k + np.pi, 0.0, np.log(20 * np.pi * k)) for k in range(1, 6)]
    windows += [(-15.0, 0.3, -1.0, 3.0), (-0.3, 15.0, -1.0, 3.0), (-30.0, 30.0, -1.0, 4.0), (3.0, 40.0, 0.5, 3.2)]
    mismatches = []
    for box in windows:
        s = find_zeros(eq, box)
        if len(s.zeros) != s.count or argument_count(eq, s.window) != len(s.zeros):
            mismatches.append(box)
    dev = max(mode_check(eq, z) for z in sp.lowest(5))
    ok = omega_hit < 1e-9 and omega_res <= 1e-10 and not mismatches and dev <= 1e-6
    detail = f"|D(-i Omega)| {omega_res:.1e}, {len(windows)} windows with {len(mismatches)} count mismatches, mode deviation {dev:.2e}"
    assert report(7, "spectrum", ok, detail)


def test_criterion_08_characteristic_membership(report):
    h = 2.5e-4
    worst, weakest_negative = 0.0, np.inf
    for i, (eq, make_state, eps) in enumerate(scalar_cases()):
        state = make_state(h)
        worst = max(worst, verify_characteristic_membership(eq, state, eps, 20, seed=i)["max_normalized_product"])
        cons = moment_constraints(eq, state, eps)
        other = random_generator(cons, np.random.default_rng(100 + i))
        neg = verify_characteristic_membership(eq, state, eps, 20, seed=i, generator=other)["max_normalized_product"]
        weakest_negative = min(weakest_negative, neg)
    ok = worst <= 1e-5 and weakest_negative > 1e-2
    detail = f"max normalized product {worst:.2e}; negative controls all exceed {weakest_negative:.2e}"
    assert report(8, "characteristic-space membership", ok, detail)


def test_criterion_09_structural_reductions(report):
    worst_nd = 0.0
    for eq, make_state, eps in random_scalar_configs():
        if eq.is_retarded():
            state = make_state(1e-3)
            a = optimal_neutral(eq, state, eps).generator.samples
            b = optimal_retarded(eq, state, eps).generator.samples
            worst_nd = max(worst_nd, np.max(np.abs(a - b)))
    worst_sys = 0.0
    for g1 in (-1.5, -1.0, 0.3, 1.0, 2.0):
        vs = vector_state([1.0], lambda t: np.cos(2 * t)[:, None])
        ss = scalar_state(1.0, lambda t: np.cos(2 * t))
        a = optimal_system(RetardedSystem.companion([g1]), vs, 0.4).generator.samples
        b = optimal_simplest(-g1, ss, 0.4).generator.samples
        worst_sys = max(worst_sys, np.max(np.abs(a - b)))
    rng = np.random.default_rng(9)
    worst_eig = 0.0
    for n in (1, 2, 3, 3, 2):
        sys = RetardedSystem(rng.standard_normal((n, n)), rng.standard_normal(n))
        comp = to_companion(sys)
        e1 = np.sort_complex(np.linalg.eigvals(sys.A))
        e2 = np.sort_complex(np.linalg.eigvals(comp.A))
        worst_eig = max(worst_eig, np.max(np.abs(e1 - e2)))
    ok = worst_nd <= 1e-12 and worst_sys <= 1e-8 and worst_eig <= 1e-10
    detail = f"neutral(d=0) vs retarded {worst_nd:.1e}, n=1 system vs simplest {worst_sys:.1e}, eigenvalues {worst_eig:.1e}"
    assert report(9, "structural reductions", ok, detail)


def test_criterion_10_determinism(report, tmp_path):
    runs = [
        ("simulate", "worked_simplest.json", ["--u", "optimal"]),
        ("optimal", "neutral_two_delays.json", []),
        ("optimal", "system_n2.json", []),
        ("verify", "worked_simplest.json", ["--samples", "20"]),
        ("spectrum", "neutral_two_delays.json", []),
        ("oracle", "system_n2.json", []),
    ]
    differing = []
    for i, (cmd, cfg, extra) in enumerate(runs):
        outs = []
        for rep in range(2):
            out = tmp_path / f"{i}_{rep}"
            code = main([cmd, "--config", str(CONFIGS / cfg), "--seed", "3", "--out", str(out), *extra])
            assert code == 0
            outs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
        if outs[0] != outs[1]:
            differing.append(f"{cmd}:{cfg}")
    ok = not differing
    assert report(10, "determinism", ok, f"{len(runs)} CLI runs repeated, differing outputs: {differing or 'none'}")
