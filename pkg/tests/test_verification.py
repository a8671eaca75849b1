import csv
import io
import math

import numpy as np
import pytest

from plapmem.errors import InvalidArgument, NonConvergence, UnsupportedExponent
from plapmem.stepper import SolverOptions
from plapmem.verification import (CASES, ConvergenceTable, LevelResult, brute_force_y, case_MS1,
                                  case_MS2, eoc, get_case, oracle_gap, pde_residual, solve_case,
                                  spatial_study, temporal_study, validate_case)


@pytest.mark.parametrize("name,p", [("MS2", 2.0), ("MS2", 3.0), ("MS2", 4.0), ("MS1", 3.0), ("MS1", 4.0)])
def test_registered_cases_validate(name, p):
    report = validate_case(get_case(name, p))
    assert report["passed"], report
    assert report["pde_residual"] <= 1e-8


def test_ms2_p2_memory_closed_form():
    case = case_MS2(2.0)
    x = np.linspace(0, 1, 9)
    for t in (0.0, 0.3, 1.0):
        expected = -np.pi**2 * t * np.exp(-t) * np.sin(np.pi * x)
        assert np.allclose(case.exact_y(x, t), expected, atol=1e-14)


@pytest.mark.parametrize("p", [2.5, 3.0, 4.0])
def test_memory_factor_limit(p):
    # near p = 2 the ms2 memory term approaches the p = 2 closed form
    near, base = case_MS2(2.0 + 1e-9), case_MS2(2.0)
    x = np.linspace(0.1, 0.9, 5)
    assert np.allclose(near.exact_y(x, 0.8), base.exact_y(x, 0.8), rtol=1e-6)
    assert np.all(case_MS2(p).exact_y(x, 0.0) == 0)


def test_exact_y_vanishes_at_start():
    for case in (case_MS1(3.0), case_MS2(4.0)):
        assert np.all(case.exact_y(np.linspace(0, 1, 11), 0.0) == 0)


def test_ms1_flux_balance_at_midpoint():
    # u_x vanishes at x = 1/2, so Delta_p u does too for p > 2
    assert case_MS1(3.0).plap_u(np.array([0.5]), 0.4)[0] == pytest.approx(0.0, abs=1e-14)


def test_brute_force_oracle_refines_at_second_order():
    case = case_MS2(3.0)
    x = np.array([0.3])
    exact = case.exact_y(x, 0.9)[0]
    e1 = abs(brute_force_y(case, x, 0.9, resolution=50)[0] - exact)
    e2 = abs(brute_force_y(case, x, 0.9, resolution=100)[0] - exact)
    assert e1 / e2 == pytest.approx(4.0, rel=0.05)


def test_oracle_gap_small():
    assert oracle_gap(case_MS1(4.0)) <= 1e-8


def test_ms1_rejects_p2():
    with pytest.raises(UnsupportedExponent):
        case_MS1(2.0)
    with pytest.raises((InvalidArgument, KeyError)):
        get_case("MS9", 3.0)
    assert set(CASES) == {"MS1", "MS2"}


def test_ms1_exact_in_space_with_quadratics():
    errs = [solve_case(case_MS1(4.0), 2, m, 32)[1].err_u for m in (4, 8, 16)]
    # only the time error is left, so refining h barely moves it
    assert max(errs) / min(errs) < 1.1


def test_eoc_helper():
    out = eoc([1.0, 0.25, 0.0625], [0.1, 0.05, 0.025])
    assert out[0] is None
    assert out[1] == pytest.approx(2.0) and out[2] == pytest.approx(2.0)
    assert math.isnan(eoc([1.0, 0.0], [1.0, 0.5])[1])


def _level(size, eu, ey):
    return LevelResult(size, 1, 1, eu, ey, 1.0, 1.0, 0.0, 1, 1, 0.0)


def test_table_csv_roundtrip():
    table = ConvergenceTable("space", [_level(0.5, 0.1, 0.2), _level(0.25, 0.025, 0.1)])
    rows = list(csv.reader(io.StringIO(table.to_csv())))
    assert rows[0] == ["h", "err_u", "err_y", "eoc_u", "eoc_y"]
    assert rows[1][3] == "" and float(rows[2][3]) == pytest.approx(2.0)
    assert float(rows[2][4]) == pytest.approx(1.0)
    assert table.min_eoc("u") == pytest.approx(2.0)
    assert ConvergenceTable("time", []).header()[0] == "delta"


def test_spatial_study_p2():
    table = spatial_study(case_MS2(2.0), 1, [8, 16, 32], lambda m: 4 * m)
    assert table.min_eoc("u") >= 1.9
    assert all(lv.max_iterations == 1 for lv in table.levels)


def test_threaded_study_matches_serial():
    serial = spatial_study(case_MS2(3.0), 1, [8, 16], 16, workers=1)
    threaded = spatial_study(case_MS2(3.0), 1, [8, 16], 16, workers=2)
    assert serial.to_csv() == threaded.to_csv()


def test_temporal_study_ladder_validation():
    with pytest.raises(InvalidArgument):
        temporal_study(case_MS2(2.0), 1, 8, [8, 4])


def test_nonconvergence_names_level():
    with pytest.raises(NonConvergence) as err:
        spatial_study(case_MS2(4.0), 1, [16], 16, SolverOptions(max_iter=1, relaxation=0.5))
    assert err.value.level == (16, 16)
