"""Acceptance criteria, one test each.

Every test prints a single ``PASS``/``FAIL`` line with the measured quantity and
the tolerance it was held to; the lines are repeated at the end of the pytest
run.  Budgets are sized to keep the whole file to a couple of minutes on one core.
"""

import json
import math

import numpy as np
import pytest
from scipy.linalg import expm

from conftest import ACCEPTANCE_LINES, lognormal_path
from pathreserve.asian import AsianOracle, AsianOracleParams, asian_derivatives, asian_U, verify_pde_identity
from pathreserve.calculus import horizontal_derivative, second_vertical_derivative, vertical_derivative
from pathreserve.cashflow import CashflowSpec, JointScenario, retrospective_value, prospective_value, value_split, \
    present_value, cash_increments
from pathreserve.chain import (MarkovModel, RateFunction, TransitionSolver, disability_model, occupation_probabilities,
                               simulate_chain, two_state)
from pathreserve.cli import ito_convergence, main
from pathreserve.config import EXAMPLE
from pathreserve.market import MarketModel, simulate
from pathreserve.paths import StoppedPath, TimeGrid
from pathreserve.payoffs import Constant, Endpoint, Guaranteed, OnDates, RunningAverage
from pathreserve.reserve import (ReserveConfig, ReserveEngine, UEstimator, deterministic_thiele, estimate_U,
                                 reserve_res1_direct, thiele_residual)

R = 0.03
SIGMA = 0.2
BS = MarketModel.black_scholes(0.05, SIGMA, 1.0, R)


def record(n: int, title: str, ok: bool, detail: str) -> None:
    line = f"AC {n:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def asian_contract(steps=128):
    """Single-state policy paying the running average of the asset at T = 1."""
    grid = TimeGrid.uniform(1.0, steps)
    spec = CashflowSpec(1, (0.0, 1.0), f={0: OnDates(RunningAverage(), [1.0])})
    return grid, spec, MarkovModel(1, {})


# 1 -------------------------------------------------------------------------

def test_ac01_asian_pde_identity():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for k in range(10_000):
        s = float(rng.uniform(0.2, 5.0))
        r = float(rng.choice([0.0, rng.uniform(0.0, 0.15)]))
        grid = TimeGrid.uniform(s, 32)
        t = float(grid.nodes[rng.integers(0, 32)])
        sp = lognormal_path(grid, k, t, sigma=float(rng.uniform(0.05, 0.8)))
        sp = StoppedPath(grid, sp.stop_index, sp.values * float(rng.uniform(0.1, 10.0)))
        res = verify_pde_identity(AsianOracleParams(r, s), sp, sigma=float(rng.uniform(0.0, 1.0)))
        worst = max(worst, abs(res))
    record(1, "asian oracle solves its pricing equation", worst < 1e-12, f"max |residual| {worst:.2e} < 1e-12 on 10^4 inputs")


# 2 -------------------------------------------------------------------------

def test_ac02_oracle_vs_nested_mc():
    grid = TimeGrid.uniform(1.0, 128)
    params = AsianOracleParams(R, 1.0)
    est = UEstimator(RunningAverage(), 1.0, BS, 10_000)
    worst_z = 0.0
    for a, t in enumerate((0.0, 0.25, 0.5, 0.75, 0.9375)):
        for b, scale in enumerate((0.5, 0.8, 1.0, 1.25, 2.0)):
            base = lognormal_path(grid, 10 * a + b, t)
            sp = StoppedPath(grid, base.stop_index, base.values * scale)
            u, se = estimate_U(est, sp, seed=100 + 10 * a + b)
            worst_z = max(worst_z, abs(u - asian_U(params, sp)) / se)
    big = UEstimator(RunningAverage(), 1.0, BS, 100_000)
    worst_rel = 0.0
    for c, spot in enumerate((0.7, 1.0, 1.4)):
        sp = StoppedPath.constant(grid, spot, 0.5)
        u, _ = estimate_U(big, sp, seed=500 + c)
        worst_rel = max(worst_rel, abs(u / asian_U(params, sp) - 1))
    record(2, "nested MC reproduces the asian oracle", worst_z < 4 and worst_rel < 1e-2,
           f"max z {worst_z:.2f} < 4 over 5x5 battery at 1e4; max rel err {worst_rel:.1e} < 1e-2 at 1e5")


# 3 -------------------------------------------------------------------------

def test_ac03_numeric_vs_analytic_derivatives():
    grid = TimeGrid.uniform(1.0, 512)
    oracle = AsianOracle(AsianOracleParams(R, 1.0))
    worst_v = worst_d = 0.0
    for k in range(25):
        t = float(grid.nodes[16 + 19 * k])
        sp = lognormal_path(grid, k, t)
        d, g, g2 = asian_derivatives(oracle.params, sp)
        worst_v = max(worst_v, abs(vertical_derivative(oracle, sp, 1e-4).value - g),
                      abs(second_vertical_derivative(oracle, sp, 1e-4).value - g2))
        worst_d = max(worst_d, abs(horizontal_derivative(oracle, sp).value - d))
    record(3, "finite-difference functional derivatives", worst_v < 1e-3 and worst_d < 5e-3,
           f"vertical {worst_v:.1e} < 1e-3, horizontal {worst_d:.1e} < 5e-3 (M = 512)")


# 4 -------------------------------------------------------------------------

def test_ac04_thiele_analytic():
    grid, spec, chain = asian_contract(512)
    eng = ReserveEngine(spec, chain, BS, grid)
    assert eng.supports_oracle
    worst = 0.0
    for k in range(5):
        path = lognormal_path(grid, 40 + k)
        for j in (0, 100, 256, 400, 510):
            worst = max(worst, abs(thiele_residual(eng, 0, path.stop_at(grid.nodes[j])).residual))
    record(4, "Thiele residual with closed-form reserve", worst < 1e-6, f"max |residual| {worst:.1e} < 1e-6 on 25 stubs")


# 5 -------------------------------------------------------------------------

def test_ac05_thiele_mc():
    grid, spec, chain = asian_contract(128)
    # residuals are pure noise here, so the 4x comparison needs enough stubs for the RMS to be stable
    stubs = [lognormal_path(grid, 60 + k, float(grid.nodes[8 + 7 * k])) for k in range(16)]

    def battery(n_inner):
        eng = ReserveEngine(spec, chain, BS, grid, ReserveConfig(n_inner=n_inner, seed=11))
        return [thiele_residual(eng, 0, sp, "mc") for sp in stubs]

    small, large = battery(10_000), battery(40_000)
    z = max(abs(r.residual) / r.std_error for r in small)
    rms_small = math.sqrt(np.mean([r.residual ** 2 for r in small]))
    rms_large = math.sqrt(np.mean([r.residual ** 2 for r in large]))
    se_ratio = np.mean([b.std_error / a.std_error for a, b in zip(small, large)])
    record(5, "Thiele residual with Monte Carlo reserve", z < 5 and rms_large < rms_small,
           f"max |res|/SE {z:.2f} < 5 at 1e4; RMS residual {rms_small:.1e} -> {rms_large:.1e} at 4e4"
           f" (mean SE ratio {se_ratio:.2f})")


# 6 -------------------------------------------------------------------------

def test_ac06_res1_res2_equivalence():
    T = 5.0
    grid = TimeGrid.uniform(T, 64)
    chain = two_state(0.05)
    specs = {
        "zero": CashflowSpec(2, (0.0, T)),
        "term insurance": CashflowSpec(2, (0.0, T), g={0: Constant(-0.04)}, h={(0, 1): Constant(1.0)}),
        "GMMB endowment": CashflowSpec(2, (0.0, T), f={0: OnDates(Guaranteed(1.0), [T])}, h={(0, 1): Endpoint()}),
        "running-average endowment": CashflowSpec(2, (0.0, T), f={0: OnDates(RunningAverage(), [T])},
                                                  g={0: Constant(-0.1)}),
    }
    outer = simulate(BS, grid, 1, "P", seed=3, tag="stub").path(0)
    stubs = [BS.initial_path(grid), outer.stop_at(2.5)]
    worst = 0.0
    details = []
    for name, spec in specs.items():
        cfg = ReserveConfig(n_inner=4096, seed=5)
        for sp in stubs:
            r2 = ReserveEngine(spec, chain, BS, grid, cfg).row(0, sp)
            r1 = reserve_res1_direct(spec, chain, BS, 0, sp, n_outer=8192, seed=6)
            comb = math.hypot(r1.std_error, r2.std_error)
            diff = abs(r1.value - r2.value)
            z = diff / comb if comb > 0 else (0.0 if diff < 1e-12 else math.inf)
            worst = max(worst, z)
        details.append(name)
    record(6, "direct and nested reserve estimators agree", worst < 4,
           f"max z {worst:.2f} < 4 over {len(specs)} specs x {len(stubs)} stubs ({', '.join(details)})")


# 7 -------------------------------------------------------------------------

def test_ac07_classical_limit():
    T, mu = 10.0, 0.02
    grid = TimeGrid.uniform(T, 512)
    flat = MarketModel.black_scholes(R, 0.0, 1.0, R)
    spec = CashflowSpec(2, (0.0, T), h={(0, 1): Constant(1.0)})
    eng = ReserveEngine(spec, two_state(mu), flat, grid)
    path = flat.initial_path(grid).extend_to_index(512)
    closed = mu * (1 - np.exp(-(R + mu) * (T - grid.nodes))) / (R + mu)
    engine = np.array([eng.value(path.stop_at(t))[0][0] for t in grid.nodes])
    ode = deterministic_thiele(spec, two_state(mu), flat, grid)[:, 0]
    err = max(np.max(np.abs(engine - closed)), np.max(np.abs(ode - closed)))
    record(7, "classical Thiele limit of the term insurance", err < 1e-6, f"max error {err:.1e} < 1e-6 at all 513 nodes")


# 8 -------------------------------------------------------------------------

def test_ac08_kolmogorov_solver():
    r = RateFunction.constant
    model = MarkovModel(3, {(0, 1): r(0.1), (0, 2): r(0.05), (1, 0): r(0.3), (1, 2): r(0.08)})
    grid = TimeGrid.uniform(10.0, 50)
    solver = TransitionSolver(model, grid)
    lam = model.generator(0.0)
    e1 = max(np.max(np.abs(solver.matrix(j, 50) - expm(lam * (10.0 - grid.nodes[j])))) for j in range(51))
    tv = TransitionSolver(disability_model(), TimeGrid.uniform(20.0, 80))
    e2 = max(np.max(np.abs(tv.matrix(0, k) @ tv.matrix(k, 80) - tv.matrix(0, 80))) for k in range(81))
    record(8, "Kolmogorov solver", e1 < 1e-8 and e2 < 1e-6,
           f"vs expm {e1:.1e} < 1e-8; Chapman-Kolmogorov {e2:.1e} < 1e-6")


# 9 -------------------------------------------------------------------------

def test_ac09_chain_simulation():
    model = disability_model()
    grid = TimeGrid.uniform(20.0, 80)
    n = 100_000
    batch = simulate_chain(model, grid, n, seed=9)
    worst = 0.0
    for t in (2.0, 5.0, 10.0, 20.0):
        p = occupation_probabilities(model, t, grid)
        freq = np.bincount(batch.states_at(t), minlength=3) / n
        se = np.sqrt(p * (1 - p) / n)
        worst = max(worst, float(np.max(np.abs(freq - p) / se)))
    record(9, "disability chain occupation frequencies", worst < 4, f"max z {worst:.2f} < 4 at 1e5 trajectories")


# 10 ------------------------------------------------------------------------

def test_ac10_cashflow_identity():
    T = 5.0
    grid = TimeGrid.uniform(T, 40, extra=[2.0])
    model = disability_model()
    spec = CashflowSpec(3, (0.0, 2.0, T),
                        f={0: OnDates(Constant(-0.5), [0.0, 2.0]), 1: OnDates(Guaranteed(1.0), [T])},
                        g={0: Constant(-0.2), 1: Endpoint()}, h={(0, 2): RunningAverage(), (1, 2): Constant(2.0)})
    n = 10_000
    assets = simulate(BS, grid, n, "P", seed=21)
    chains = simulate_chain(model, grid, n, seed=22)
    rng = np.random.default_rng(23)
    split_bad = start_bad = 0
    for k in range(n):
        scen = JointScenario(assets.path(k), chains.trajectory(k))
        t = float(rng.uniform(0.0, T)) if k % 2 else float(grid.nodes[rng.integers(0, 41)])
        v, retro, pro = value_split(spec, scen, BS.curve, t)
        split_bad += v != retro + pro
        if k % 10 == 0:
            dc0 = sum(e.amount for e in cash_increments(spec, scen) if e.time == 0.0)
            v0 = present_value(spec, scen, BS.curve, 0.0)
            start_bad += v0 != dc0 + prospective_value(spec, scen, BS.curve, 0.0)
            start_bad += retrospective_value(spec, scen, BS.curve, 0.0) != dc0
    record(10, "retrospective plus prospective value", split_bad == 0 and start_bad == 0,
           f"{split_bad} mismatches in 1e4 scenarios, {start_bad} at t = 0 (bitwise)")


# 11 ------------------------------------------------------------------------

def test_ac11_functional_ito():
    rows = ito_convergence(1.0, [128, 256, 512, 1024], 50, seed=0)
    medians = [r[1] for r in rows]
    tele = max(r[2] for r in rows)
    mono = all(b < a for a, b in zip(medians, medians[1:]))
    record(11, "functional Ito formula", mono and tele < 1e-12,
           "medians " + ", ".join(f"{m:.3g}" for m in medians) + f" decreasing; identity residual {tele:.1e} < 1e-12")


# 12 ------------------------------------------------------------------------

SMALL = EXAMPLE.replace("steps: 512", "steps: 32").replace("n_inner: 4096", "n_inner: 512") \
    .replace("n_outer: 4096", "n_outer: 512").replace("eval_every: 64", "eval_every: 16\n  ito_steps: [16, 32, 64]\n  ito_paths: 20") \
    .replace("{name: constant, params: {value: 1.0}}", "{name: guaranteed, params: {strike: 1.0}}")

VERB_ARGS = {
    "simulate": ["--model", "joint", "--paths", "50", "--out", "cache.bin"],
    "reserve": [],
    "check-thiele": [],
    "check-ito": [],
    "check-crossvalidate": [],
    "solve-premium": [],
}


def test_ac12_cli_determinism(tmp_path):
    cfg = tmp_path / "run.yaml"
    cfg.write_text(SMALL)
    differing = []
    n_files = 0
    for verb, extra in VERB_ARGS.items():
        bodies = []
        for rep in ("a", "b"):
            out = tmp_path / verb / rep
            code = main([verb, "--config", str(cfg), "--out-dir", str(out), "--seed", "17", *extra])
            assert code == 0, verb
            bodies.append({p.name: p.read_bytes() for p in sorted(out.iterdir()) if p.name != "metadata.json"})
        n_files += len(bodies[0])
        if bodies[0] != bodies[1] or not bodies[0]:
            differing.append(verb)
        json.loads((tmp_path / verb / "a" / "metadata.json").read_text())
    record(12, "CLI determinism", not differing,
           f"{n_files} artifacts over {len(VERB_ARGS)} verbs byte-identical" if not differing else f"differ: {differing}")
