"""Acceptance suite: one test and one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v``. The PASS/FAIL lines are
written straight to the terminal, bypassing output capture.
"""

import time

import numpy as np
import pytest

from pfasst_sh.analysis import CostParams, spectral_error, speedup_vs_sdc
from pfasst_sh.cases import default_params, initial_state
from pfasst_sh.multilevel import (coarse_truncation, fas_correction, interpolate_space,
                                  make_pair, mlsdc_step, restrict_space, restrict_state)
from pfasst_sh.pfasst import BlockConfig, dump_message_log, run_block, run_pfasst
from pfasst_sh.sdc import SpaceTimeState, build_tables, collocation_residual, sdc_step
from pfasst_sh.spherical_harmonics import TransformPlan, n_coeffs
from pfasst_sh.swe_rhs import (DIV, PHI, PrognosticState, SWEProblem,
                               eval_linear_array, solve_implicit_array)

from conftest import random_coeffs, random_state


@pytest.fixture
def verdict(capsys):
    def report(number, text, ok):
        with capsys.disabled():
            print(f"\ncriterion {number:2d}: {'PASS' if ok else 'FAIL'} - {text}")
        assert ok, text
    return report


def _dome(R, **overrides):
    params, cfg = default_params("gaussian", **overrides)
    problem = SWEProblem(R, params)
    return problem, initial_state("gaussian", problem.plan, params, cfg).as_array()


def test_c01_transform_round_trip_and_orthonormality(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst_rt, worst_orth = 0.0, 0.0
    for R in (15, 31, 63):
        plan = TransformPlan(R)
        for _ in range(100):
            c = random_coeffs(R, rng)
            back = plan.anal(plan.synth(c))
            worst_rt = max(worst_rt, np.max(np.abs(back - c)) / np.max(np.abs(c)))
        P = plan.legendre  # (lat, r, s)
        for r in range(R + 1):
            Pr = P[:, r, r:]
            G = (plan.weights[:, None] * Pr).T @ Pr
            worst_orth = max(worst_orth, np.max(np.abs(G - np.eye(G.shape[0]))))
    elapsed = time.perf_counter() - t0
    verdict(1, f"round trip {worst_rt:.1e} <= 1e-12, orthonormality {worst_orth:.1e} <= 1e-10, "
               f"{elapsed:.1f}s < 10s",
            worst_rt <= 1e-12 and worst_orth <= 1e-10 and elapsed < 10)


def test_c02_quadrature_tables(verdict):
    t3 = build_tables(3)
    ok = np.max(np.abs(t3.nodes - [0, 0.5, 1])) <= 1e-14
    ok &= np.max(np.abs(t3.Q[-1] - [1 / 6, 2 / 3, 1 / 6])) <= 1e-14
    worst = max(np.max(np.abs(build_tables(n).Q.sum(axis=1) - build_tables(n).nodes))
                for n in (2, 3, 5))
    verdict(2, f"Lobatto-3/Simpson exact, row-sum error {worst:.1e}", bool(ok and worst <= 1e-14))


def test_c03_implicit_solve_residual(verdict):
    params = default_params("gaussian")[0]
    rng = np.random.default_rng(3)
    worst = 0.0
    for c in (1e-3, 1.0, 1e3):
        for _ in range(50):
            b = random_state(31, rng)
            x = solve_implicit_array(b, c, params)
            res = x - c * eval_linear_array(x, params) - b
            worst = max(worst, np.max(np.abs(res)) / np.max(np.abs(b)))
    verdict(3, f"max relative residual {worst:.1e} <= 1e-12", worst <= 1e-12)


def test_c04_sdc_convergence_order(verdict):
    t0 = time.perf_counter()
    R, horizon = 32, 6400.0
    problem, u0 = _dome(R)

    def run(nodes, sweeps, dt):
        tables, u = build_tables(nodes), u0
        for _ in range(int(round(horizon / dt))):
            u = sdc_step(problem, u, dt, tables, sweeps)
        return u

    ref = run(5, 8, 25.0)
    dts = np.array([1600.0, 800.0, 400.0, 200.0])
    slopes = {}
    for nodes, sweeps in ((3, 4), (5, 8)):
        errs = [max(spectral_error(run(nodes, sweeps, dt), ref, R).as_row()) for dt in dts]
        slopes[(nodes, sweeps)] = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    elapsed = time.perf_counter() - t0
    s34, s58 = slopes[(3, 4)], slopes[(5, 8)]
    verdict(4, f"slopes SDC(3,4) {s34:.2f} >= 3.5, SDC(5,8) {s58:.2f} >= 5.5, "
               f"{elapsed:.0f}s < 300s",
            s34 >= 3.5 and s58 >= 5.5 and elapsed < 300)


def test_c05_fas_identity(verdict):
    fine = SWEProblem(31)
    coarse = SWEProblem(coarse_truncation(31, 0.5), fine.params)
    pair = make_pair(fine, coarse, 5, 3)
    rng = np.random.default_rng(5)
    dt = 600.0
    worst = 0.0
    for _ in range(10):
        u = np.stack([random_state(31, rng) for _ in range(5)])
        f_sts = SpaceTimeState(u, np.empty_like(u), np.empty_like(u))
        f_sts.reevaluate(fine)
        c_sts = restrict_state(f_sts, pair)
        tau = fas_correction(f_sts, c_sts, dt, pair)
        Qf, Qc = pair.fine.tables.Q, pair.coarse.tables.Q
        res_f = f_sts.u - dt * np.tensordot(Qf, f_sts.f, axes=(1, 0)) - f_sts.u[0]
        res_c = c_sts.u - dt * np.tensordot(Qc, c_sts.f, axes=(1, 0)) - c_sts.u[0] - tau
        diff = np.max(np.abs(res_c - pair.restrict(res_f))) / np.max(np.abs(res_f))
        worst = max(worst, diff)
    verdict(5, f"coarse residual minus restricted fine residual {worst:.1e} <= 1e-12",
            worst <= 1e-12)


def test_c06_transfer_identities(verdict):
    rng = np.random.default_rng(6)
    x = np.stack([random_coeffs(16, rng) for _ in range(3)])
    exact = np.array_equal(restrict_space(interpolate_space(x, 16, 31), 31, 16), x)
    p = SWEProblem(7)
    pair = make_pair(p, p, 5, 3)
    tc, tf = pair.coarse.tables.nodes, pair.fine.tables.nodes
    q = lambda t: 1.5 - 2.0 * t + 4.0 * t ** 2
    err = np.max(np.abs(pair.interpolate_time(q(tc)) - q(tf)))
    verdict(6, f"restrict(interpolate) exact: {exact}, quadratic 3->5 error {err:.1e} <= 1e-13",
            exact and err <= 1e-13)


def test_c07_pfasst_determinism(verdict, tmp_path):
    fine, u0 = _dome(15)
    coarse = SWEProblem(coarse_truncation(15, 0.5), fine.params)
    cfg = BlockConfig(make_pair(fine, coarse, 5, 3), 4, 100.0, 3)
    blobs = {}
    for mode in ("serial-emulation", "threads"):
        res = run_block(cfg, u0, mode)
        PrognosticState.from_array(res.final, 15).dump(tmp_path / f"{mode}.json")
        dump_message_log(res.messages, tmp_path / f"{mode}.jsonl")
        blobs[mode] = ((tmp_path / f"{mode}.json").read_bytes(),
                       (tmp_path / f"{mode}.jsonl").read_bytes())
    same = blobs["serial-emulation"] == blobs["threads"]
    verdict(7, f"serial-emulation and threaded checkpoints and logs byte-identical: {same}",
            same)


@pytest.mark.slow
def test_c08_coarsening_ratio_ordering(verdict):
    t0 = time.perf_counter()
    R, dt, n_ts, horizon = 64, 100.0, 8, 6400.0
    fine, u0 = _dome(R)
    tables, ref = build_tables(5), u0
    for _ in range(int(horizon / 25.0)):
        ref = sdc_step(fine, ref, 25.0, tables, 8)
    errors = {}
    for alpha in (0.8, 0.5, 0.2):
        coarse = SWEProblem(coarse_truncation(R, alpha), fine.params)
        cfg = BlockConfig(make_pair(fine, coarse, 5, 3), n_ts, dt, 8)
        u, _ = run_pfasst(cfg, u0, int(horizon / (n_ts * dt)))
        errors[alpha] = max(spectral_error(u, ref, 16).as_row())
    elapsed = time.perf_counter() - t0
    ok = errors[0.8] <= errors[0.5] <= errors[0.2] and elapsed < 1800
    verdict(8, "E_16 alpha=4/5 {:.1e} <= 1/2 {:.1e} <= 1/5 {:.1e}, {:.0f}s < 1800s".format(
        errors[0.8], errors[0.5], errors[0.2], elapsed), ok)


def test_c09_convergence_to_collocation(verdict):
    problem, u0 = _dome(15)
    pair = make_pair(problem, problem, 5, 5)
    dt = 50.0
    initial = collocation_residual(SpaceTimeState.spread(problem, u0, 5), dt, pair.fine.tables)
    res = run_block(BlockConfig(pair, 1, dt, 8), u0)
    final = res.residuals[0][-1]
    verdict(9, f"residual ratio after 8 iterations {final / initial:.1e} < 1e-9",
            final < 1e-9 * initial)


def test_c10_cost_model(verdict):
    p = CostParams(n_ts=16, M_f=2, M_c=1, N_PF=4, alpha=0.2, N_S=4)
    # independent arithmetic of the closed form
    n, Mf, Mc, NS, NPF, al = 16, 2, 1, 4, 4, 0.2
    a = 2 / 3
    b = (3 * Mf + 2) / (3 * n * Mf)
    c = (5 * Mc + 2) / (3 * n * Mf)
    d = (2 * Mc + (3 * Mc + 2) * n + 2) / (3 * n * Mf)
    oracle = (NS + a) / (b * NPF + c * al ** 2 * NPF + d * al ** 2)
    got = speedup_vs_sdc(p)
    grid = np.linspace(0.05, 1.0, 20)
    vals = [speedup_vs_sdc(CostParams(16, 2, 1, 4, float(x), N_S=4)) for x in grid]
    monotone = bool(np.all(np.diff(vals) < 0))
    rel = abs(got - oracle) / oracle
    verdict(10, f"speedup {got:.6f} vs oracle {oracle:.6f} (rel {rel:.1e}), "
                f"monotone in alpha: {monotone}", rel <= 1e-12 and monotone)


def test_c11_conservation(verdict):
    R, dt, steps = 31, 100.0, 10
    worst_phi, worst_div = 0.0, 0.0
    for case in ("gaussian", "rossby", "galewsky"):
        params, cfg = default_params(case)
        fine = SWEProblem(R, params)
        coarse = SWEProblem(coarse_truncation(R, 0.5), params)
        u0 = initial_state(case, fine.plan, params, cfg).as_array()
        pair = make_pair(fine, coarse, 3, 2)
        finals = []
        u = u0
        for _ in range(steps):
            u = sdc_step(fine, u, dt, pair.fine.tables, 4)
        finals.append(u)
        u = u0
        for _ in range(steps):
            u = mlsdc_step(u, dt, pair, 2)
        finals.append(u)
        finals.append(run_pfasst(BlockConfig(pair, 5, dt, 3), u0, steps // 5)[0])
        for u in finals:
            worst_phi = max(worst_phi, abs(u[PHI, 0] - u0[PHI, 0]) / abs(u0[PHI, 0]))
            worst_div = max(worst_div, abs(u[DIV, 0]))
    verdict(11, f"Phi_00 drift {worst_phi:.1e} < 1e-10, |div_00| {worst_div:.1e} < 1e-14",
            worst_phi < 1e-10 and worst_div < 1e-14)


@pytest.mark.slow
def test_c12_parallel_wall_clock_scaling(verdict):
    import os
    fine, u0 = _dome(64)
    coarse = SWEProblem(coarse_truncation(64, 0.5), fine.params)
    pair = make_pair(fine, coarse, 5, 3)
    total_steps, dt, iters = 8, 100.0, 4
    walls = {}
    for n_ts in (2, 4, 8):
        cfg = BlockConfig(pair, n_ts, dt, iters)
        t0 = time.perf_counter()
        run_pfasst(cfg, u0, total_steps // n_ts, mode="processes")
        walls[n_ts] = time.perf_counter() - t0
    ok = walls[2] > walls[4] > walls[8]
    verdict(12, "wall time n_ts=2 {:.1f}s > 4 {:.1f}s > 8 {:.1f}s on {} core(s)".format(
        walls[2], walls[4], walls[8], os.cpu_count()), ok)
