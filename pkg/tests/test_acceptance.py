"""Acceptance criteria, one test per criterion, each reporting a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines inline.
"""
import json
import time

import numpy as np
import pytest

from plapmem.assembly import plap_residual
from plapmem.cli import run_cli
from plapmem.memory import History, Kernel, eval_Qg
from plapmem.mesh_basis import build_uniform_mesh
from plapmem.stepper import CrankNicolson, ProblemSpec
from plapmem.verification import (brute_force_y, case_MS1, case_MS2, solve_case, spatial_study,
                                  temporal_study)


def _fmt(vals):
    return "[" + ", ".join("-" if v is None else f"{v:.3f}" for v in vals) + "]"


def _decreasing(errs):
    return all(b < a for a, b in zip(errs, errs[1:]))


def _ladder_ok(table, floor_u, floor_y=None):
    ok_u = table.min_eoc("u") >= floor_u and _decreasing([lv.err_u for lv in table.levels])
    if floor_y is None:
        return ok_u
    return ok_u and table.min_eoc("y") >= floor_y and _decreasing([lv.err_y for lv in table.levels])


@pytest.fixture(scope="module")
def space_p4():
    t0 = time.perf_counter()
    table = spatial_study(case_MS2(4.0), 1, [16, 32, 64, 128], lambda m: 4 * m)
    return table, time.perf_counter() - t0


def test_c01_quadrature_exactness(report):
    t0 = time.perf_counter()
    one = Kernel.const(1.0)
    worst = 0.0
    delta, a, b = 0.01, 0.4, 2.5
    for k in (0, 1, 2, 10, 100):
        hist = History(delta, np.zeros(1), np.array([a]))
        for j in range(1, k + 2):
            hist.append(np.zeros(1), np.array([a + b * j * delta]))
        th = (k + 0.5) * delta
        exact = a * th + b * th**2 / 2
        worst = max(worst, abs(eval_Qg(hist, one, k)[0] - exact) / exact)
    secs = time.perf_counter() - t0
    ok = worst <= 1e-13 and secs < 1.0
    assert report("C1 quadrature exactness", ok, f"max rel err {worst:.2e} (tol 1e-13), {secs:.2f}s")


def test_c02a_p2_spatial_ladder(report):
    t0 = time.perf_counter()
    table = spatial_study(case_MS2(2.0), 1, [8, 16, 32, 64], lambda m: 4 * m)
    secs = time.perf_counter() - t0
    ok = _ladder_ok(table, 1.9) and secs < 60 and all(lv.max_iterations == 1 for lv in table.levels)
    assert report("C2 p=2 space ladder", ok, f"EOC_u {_fmt(table.eoc_u)} (floor 1.9), {secs:.1f}s")


def test_c02b_p2_temporal_ladder(report):
    t0 = time.perf_counter()
    table = temporal_study(case_MS2(2.0), 1, 512, [8, 16, 32, 64, 128])
    secs = time.perf_counter() - t0
    ok = _ladder_ok(table, 1.9, 1.9) and secs < 60
    assert report("C2 p=2 time ladder (r=1, m=512)", ok,
                  f"EOC_u {_fmt(table.eoc_u)} EOC_y {_fmt(table.eoc_y)} (floor 1.9), "
                  f"err_u {[f'{lv.err_u:.2e}' for lv in table.levels]}, {secs:.1f}s")


def test_c03_p4_spatial_floor(report, space_p4):
    table, secs = space_p4
    floor = 2 / 3 - 0.1
    ok = _ladder_ok(table, floor, floor) and secs < 300
    iters = [lv.max_iterations for lv in table.levels]
    assert report("C3 p=4 space floor", ok,
                  f"EOC_u {_fmt(table.eoc_u)} EOC_y {_fmt(table.eoc_y)} (floor {floor:.3f}), "
                  f"max Picard iterations/step {iters}, {secs:.1f}s")


@pytest.mark.parametrize("p", [4.0, 3.0])
def test_c04_temporal_floor(report, p):
    t0 = time.perf_counter()
    # quadratic elements keep the spatial error at m=512 below the time error
    table = temporal_study(case_MS2(p), 2, 512, [16, 32, 64, 128])
    secs = time.perf_counter() - t0
    floor = p / (p - 1) - 0.1
    ok = _ladder_ok(table, floor, floor) and secs < 300
    assert report(f"C4 p={p:g} time floor (r=2, m=512)", ok,
                  f"EOC_u {_fmt(table.eoc_u)} EOC_y {_fmt(table.eoc_y)} (floor {floor:.3f}), {secs:.1f}s")


@pytest.mark.parametrize("p", [2.0, 4.0])
def test_c05_energy_dissipation(report, p):
    t0 = time.perf_counter()
    prob = ProblemSpec(p, (0.0, 1.0), 1.0, lambda x: np.sin(np.pi * x), lambda x, t: 0 * x,
                       Kernel.const(0.0))
    mesh, dofmap = build_uniform_mesh(0, 1, 64, 1)
    cn = CrankNicolson(prob, mesh, dofmap, 128)
    hist = cn.run()
    norms = [cn.mass_norm(U) ** 2 for U in hist.U]
    gaps = []
    for k in range(cn.N):
        ubar = 0.5 * (hist.U[k] + hist.U[k + 1])
        gaps.append(abs(norms[k + 1] - norms[k] + 2 * cn.delta * (plap_residual(ubar, p, mesh, dofmap) @ ubar)))
    secs = time.perf_counter() - t0
    ok = max(gaps) <= 1e-8 and _decreasing(norms) and secs < 5
    assert report(f"C5 energy identity p={p:g}", ok, f"max defect {max(gaps):.2e} (tol 1e-8), {secs:.2f}s")


def test_c06_monotonicity(report):
    t0 = time.perf_counter()
    mesh, dofmap = build_uniform_mesh(0, 1, 32, 2)
    rng = np.random.default_rng(20240601)
    worst = np.inf
    for i in range(100):
        p = (3.0, 4.0)[i % 2]
        u, v = rng.standard_normal((2, dofmap.n_dof))
        gap = (plap_residual(u, p, mesh, dofmap) - plap_residual(v, p, mesh, dofmap)) @ (u - v)
        worst = min(worst, gap)
    secs = time.perf_counter() - t0
    ok = worst >= -1e-12 and secs < 1
    assert report("C6 monotonicity", ok, f"min pairing {worst:.3e} over 100 pairs, {secs:.2f}s")


def test_c07_determinism(report):
    case = case_MS2(4.0)
    a, _ = solve_case(case, 1, 128, 512)
    b, _ = solve_case(case, 1, 128, 512)
    same = all(np.array_equal(x, y) for x, y in zip(a.U + a.Y, b.U + b.Y)) and len(a) == len(b)
    assert report("C7 bit-identical reruns", same, "m=128, N=512, p=4")


def test_c08_admissibility_gate(report, tmp_path):
    def cfg(N, name):
        path = tmp_path / name
        path.write_text(json.dumps({"problem": {"p": 3, "T": 3.0, "kernel": {"type": "const", "c": -2.0}},
                                    "m": 16, "N": N}))
        return str(path)

    rejected = run_cli(["solve", "--config", cfg(1, "bad.json"), "--out", str(tmp_path / "bad"), "--quiet"])
    accepted = run_cli(["solve", "--config", cfg(3, "ok.json"), "--out", str(tmp_path / "ok"), "--quiet"])
    ok = rejected == 4 and accepted == 0
    assert report("C8 delta admissibility gate", ok, f"delta=3 -> exit {rejected}, delta=1 -> exit {accepted}")


def test_c09_oracle_consistency(report):
    t0 = time.perf_counter()
    worst = 0.0
    for case in (case_MS1(3.0), case_MS1(4.0), case_MS2(3.0), case_MS2(4.0)):
        xs = np.linspace(0.1, 0.9, 5)
        for t in np.linspace(0.2, 1.0, 5):
            gap = np.max(np.abs(case.exact_y(xs, t) - brute_force_y(case, xs, t, resolution=100_000)))
            worst = max(worst, gap)
    secs = time.perf_counter() - t0
    ok = worst <= 1e-8 and secs < 30
    assert report("C9 oracle consistency", ok, f"max |y - brute force| {worst:.2e} (tol 1e-8), {secs:.1f}s")


def test_c10_stability(report, space_p4):
    table, _ = space_p4
    a, b = table.levels[-2], table.levels[-1]
    du = abs(b.max_u - a.max_u) / a.max_u
    dy = abs(b.max_y - a.max_y) / a.max_y
    ok = du < 0.1 and dy < 0.1
    assert report("C10 stability", ok, f"max_k|U| {a.max_u:.5f}->{b.max_u:.5f}, "
                  f"max_k|Y| {a.max_y:.5f}->{b.max_y:.5f} (variation < 10%)")
