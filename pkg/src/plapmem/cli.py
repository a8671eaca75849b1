"""Command-line front end.

Subcommands ``solve``, ``study-space``, ``study-time`` and ``validate`` each read
a strict JSON config (see README) and write CSV/JSON outputs.

Exit codes: 0 success, 1 internal error or failed validation, 2 config error,
3 solver nonconvergence, 4 inadmissible time step.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .errors import ConfigError, InadmissibleStep, InvalidArgument, NonConvergence
from .memory import Kernel
from .mesh_basis import MAX_DEGREE, build_uniform_mesh, l2_error
from .stepper import CrankNicolson, ProblemSpec, SolverOptions
from .verification import CASES, get_case, spatial_study, temporal_study, validate_case

log = logging.getLogger("plapmem")

MODES = ("solve", "study-space", "study-time", "validate")

_TOP_KEYS = {"mode", "case", "p", "problem", "r", "m", "N", "m_list", "N_list", "N_factor",
             "solver", "output"}
_SOLVER_KEYS = {"method", "tol", "max_iter", "relaxation", "eps_reg"}
_PROBLEM_KEYS = {"p", "T", "domain", "kernel", "u0", "f"}


@dataclass
class RunConfig:
    mode: str
    case: str | None = None
    p: float | None = None
    problem: dict | None = None
    r: int = 1
    m: int | None = None
    N: int | None = None
    m_list: list[int] | None = None
    N_list: list[int] | None = None
    N_factor: int | None = None
    solver: SolverOptions = field(default_factory=SolverOptions)
    output_dir: str | None = None

    def resolved(self) -> dict:
        """Configuration after defaulting, as written to meta.json."""
        out = {k: v for k, v in asdict(self).items() if k != "solver"}
        p = self.p if self.p is not None else (self.problem or {}).get("p")
        s = self.solver
        out["solver"] = {"method": s.method, "tol": s.tol, "max_iter": s.max_iter,
                         "relaxation": s.omega(p) if p is not None else s.relaxation,
                         "eps_reg": s.regularization()}
        return out


def _fail(msg: str):
    raise ConfigError(msg)


def _reject_unknown(obj: dict, allowed: set, where: str) -> None:
    for key in obj:
        if key not in allowed:
            _fail(f"unknown key {key!r} in {where}")


def _number(obj: dict, key: str, where: str, *, required=False, default=None):
    if key not in obj:
        if required:
            _fail(f"missing required field {where}{key}")
        return default
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        _fail(f"field {where}{key} must be a finite number, got {v!r}")
    return v


def _integer(obj: dict, key: str, where: str, lo: int, hi: int | None = None, *, required=False,
             default=None):
    if key not in obj:
        if required:
            _fail(f"missing required field {where}{key}")
        return default
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, int):
        _fail(f"field {where}{key} must be an integer, got {v!r}")
    if v < lo:
        _fail(f"field {where}{key}={v} out of range: must be >= {lo}")
    if hi is not None and v > hi:
        _fail(f"field {where}{key}={v} out of range: must be <= {hi}")
    return v


def _ladder(obj: dict, key: str, *, required=False):
    if key not in obj:
        if required:
            _fail(f"missing required field {key}")
        return None
    v = obj[key]
    if not isinstance(v, list) or not v or any(isinstance(x, bool) or not isinstance(x, int) for x in v):
        _fail(f"field {key} must be a non-empty list of integers")
    if v[0] < 1:
        _fail(f"field {key} out of range: entries must be >= 1")
    if any(b <= a for a, b in zip(v, v[1:])):
        _fail(f"field {key} must be strictly increasing, got {v}")
    return list(v)


def _parse_solver(obj: Any) -> SolverOptions:
    if not isinstance(obj, dict):
        _fail("field solver must be an object")
    _reject_unknown(obj, _SOLVER_KEYS, "solver")
    kw = {}
    if "method" in obj:
        if obj["method"] not in ("picard", "newton"):
            _fail(f"field solver.method must be 'picard' or 'newton', got {obj['method']!r}")
        kw["method"] = obj["method"]
    tol = _number(obj, "tol", "solver.")
    if tol is not None:
        if tol <= 0:
            _fail(f"field solver.tol={tol} out of range: must be > 0")
        kw["tol"] = float(tol)
    max_iter = _integer(obj, "max_iter", "solver.", 1)
    if max_iter is not None:
        kw["max_iter"] = max_iter
    rel = _number(obj, "relaxation", "solver.")
    if rel is not None:
        if not 0 < rel <= 1:
            _fail(f"field solver.relaxation={rel} out of range: must be in (0, 1]")
        kw["relaxation"] = float(rel)
    eps = _number(obj, "eps_reg", "solver.")
    if eps is not None:
        if eps < 0:
            _fail(f"field solver.eps_reg={eps} out of range: must be >= 0")
        kw["eps_reg"] = float(eps)
    return SolverOptions(**kw)


def _parse_selector(obj: Any, where: str, kinds: dict[str, set]) -> dict:
    if not isinstance(obj, dict) or "type" not in obj:
        _fail(f"field {where} must be an object with a 'type'")
    kind = obj["type"]
    if kind not in kinds:
        _fail(f"field {where}.type must be one of {sorted(kinds)}, got {kind!r}")
    _reject_unknown(obj, kinds[kind] | {"type"}, where)
    for key in kinds[kind]:
        if key == "coeffs":
            c = obj.get("coeffs")
            if not isinstance(c, list) or not c or any(
                    isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x) for x in c):
                _fail(f"field {where}.coeffs must be a non-empty list of finite numbers")
        else:
            _number(obj, key, f"{where}.")
    return dict(obj)


_KERNELS = {"exp": {"a"}, "const": {"c"}, "poly": {"coeffs"}}
_U0 = {"sine": {"amplitude"}, "bubble": {"amplitude"}, "zero": set()}
_F = {"zero": set(), "const": {"c"}}


def _parse_problem(obj: Any) -> dict:
    if not isinstance(obj, dict):
        _fail("field problem must be an object")
    _reject_unknown(obj, _PROBLEM_KEYS, "problem")
    p = _number(obj, "p", "problem.", required=True)
    if p < 2:
        _fail(f"field problem.p={p} out of range: must be >= 2")
    T = _number(obj, "T", "problem.", required=True)
    if T <= 0:
        _fail(f"field problem.T={T} out of range: must be > 0")
    dom = obj.get("domain", [0.0, 1.0])
    if (not isinstance(dom, list) or len(dom) != 2
            or any(isinstance(z, bool) or not isinstance(z, (int, float)) or not math.isfinite(z) for z in dom)):
        _fail("field problem.domain must be a list [a, b] of finite numbers")
    if not dom[0] < dom[1]:
        _fail(f"field problem.domain out of range: need a < b, got {dom}")
    return {"p": p, "T": T, "domain": list(dom),
            "kernel": _parse_selector(obj.get("kernel", {"type": "exp", "a": 1.0}), "problem.kernel", _KERNELS),
            "u0": _parse_selector(obj.get("u0", {"type": "sine"}), "problem.u0", _U0),
            "f": _parse_selector(obj.get("f", {"type": "zero"}), "problem.f", _F)}


def parse_config(text: str, mode: str | None = None) -> RunConfig:
    """Parse and validate a JSON run configuration; raises ConfigError."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        _fail("config must be a JSON object")
    _reject_unknown(data, _TOP_KEYS, "config")
    cfg_mode = data.get("mode", mode)
    if cfg_mode not in MODES:
        _fail(f"field mode must be one of {list(MODES)}, got {cfg_mode!r}")
    if mode is not None and cfg_mode != mode:
        _fail(f"field mode={cfg_mode!r} does not match subcommand {mode!r}")

    cfg = RunConfig(mode=cfg_mode)
    if "problem" in data and "case" in data:
        _fail("give either 'case' or 'problem', not both")
    if "problem" in data:
        if cfg_mode != "solve":
            _fail(f"inline 'problem' is only supported by solve, not {cfg_mode}")
        if "p" in data:
            _fail("field p belongs inside 'problem' for inline problems")
        cfg.problem = _parse_problem(data["problem"])
    else:
        if "case" not in data:
            _fail("missing required field case (or problem)")
        if data["case"] not in CASES:
            _fail(f"field case must be one of {sorted(CASES)}, got {data['case']!r}")
        cfg.case = data["case"]
        p = _number(data, "p", "", required=True)
        if cfg.case == "MS1" and p <= 2:
            _fail(f"field p={p} out of range: case MS1 needs p > 2")
        if p < 2:
            _fail(f"field p={p} out of range: must be >= 2")
        cfg.p = float(p)

    cfg.r = _integer(data, "r", "", 1, MAX_DEGREE, default=1)
    if cfg_mode == "solve":
        cfg.m = _integer(data, "m", "", 1, required=True)
        cfg.N = _integer(data, "N", "", 1, required=True)
    elif cfg_mode == "study-space":
        cfg.m_list = _ladder(data, "m_list", required=True)
        cfg.N = _integer(data, "N", "", 1)
        cfg.N_factor = _integer(data, "N_factor", "", 1)
        if cfg.N is not None and cfg.N_factor is not None:
            _fail("give either N or N_factor, not both")
        if cfg.N is None and cfg.N_factor is None:
            cfg.N_factor = 4
    elif cfg_mode == "study-time":
        cfg.N_list = _ladder(data, "N_list", required=True)
        cfg.m = _integer(data, "m", "", 1, default=512)
    for key in ("m", "N", "m_list", "N_list", "N_factor"):
        if key in data and getattr(cfg, key) is None:
            _fail(f"field {key} is not used by mode {cfg_mode}")
    cfg.solver = _parse_solver(data.get("solver", {}))
    if "output" in data:
        out = data["output"]
        if not isinstance(out, dict):
            _fail("field output must be an object")
        _reject_unknown(out, {"dir"}, "output")
        if not isinstance(out.get("dir"), str):
            _fail("field output.dir must be a string")
        cfg.output_dir = out["dir"]
    return cfg


def build_problem(spec: dict) -> ProblemSpec:
    a, b = spec["domain"]
    k = spec["kernel"]
    kernel = {"exp": lambda: Kernel.exp(float(k.get("a", 1.0))),
              "const": lambda: Kernel.const(float(k.get("c", 0.0))),
              "poly": lambda: Kernel.poly(k["coeffs"])}[k["type"]]()
    u = spec["u0"]
    amp = float(u.get("amplitude", 1.0))
    u0 = {"sine": lambda x: amp * np.sin(np.pi * (x - a) / (b - a)),
          "bubble": lambda x: amp * (x - a) * (b - x),
          "zero": lambda x: np.zeros_like(np.asarray(x, dtype=float))}[u["type"]]
    fs = spec["f"]
    c = float(fs.get("c", 0.0))
    f = (lambda x, t: np.zeros_like(np.asarray(x, dtype=float))) if fs["type"] == "zero" \
        else (lambda x, t: np.full_like(np.asarray(x, dtype=float), c))
    return ProblemSpec(float(spec["p"]), (float(a), float(b)), float(spec["T"]), u0, f, kernel)


def _fmt(v) -> str:
    return repr(float(v))


def _write_meta(out: Path, cfg: RunConfig, summary: dict, seed) -> None:
    meta = {"version": __version__, "config": cfg.resolved(), "seed": seed, "summary": summary,
            "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat()}
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def _do_solve(cfg: RunConfig, out: Path, say) -> dict:
    if cfg.problem is not None:
        problem = build_problem(cfg.problem)
        exact_u = exact_y = None
        label = "inline"
    else:
        case = get_case(cfg.case, cfg.p)
        problem = case.problem()
        exact_u, exact_y = case.exact_u, case.exact_y
        label = cfg.case
    a, b = problem.domain
    mesh, dofmap = build_uniform_mesh(a, b, cfg.m, cfg.r)
    stepper = CrankNicolson(problem, mesh, dofmap, cfg.N, cfg.solver)
    hist = stepper.run()
    T = problem.T
    x = dofmap.node_coordinates(mesh)
    U, Y = dofmap.to_full(hist.U[-1]), dofmap.to_full(hist.Y[-1])
    nan = np.full_like(x, np.nan)
    eu = exact_u(x, T) if exact_u else nan
    ey = exact_y(x, T) if exact_y else nan
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "U", "Y", "exact_u", "exact_y"])
    for row in zip(x, U, Y, eu, ey):
        w.writerow([_fmt(v) for v in row])
    (out / "solution.csv").write_text(buf.getvalue())
    iters = [d.iterations for d in hist.diagnostics]
    summary = {"case": label, "p": problem.p, "r": cfg.r, "m": cfg.m, "N": cfg.N,
               "delta": stepper.delta, "admissibility": stepper.coeff,
               "iterations_total": sum(iters), "iterations_max": max(iters)}
    if exact_u:
        summary["err_u"] = l2_error(hist.U[-1], exact_u, T, mesh, dofmap)
        summary["err_y"] = l2_error(hist.Y[-1], exact_y, T, mesh, dofmap)
    msg = (f"solve {label} p={problem.p:g} r={cfg.r} m={cfg.m} N={cfg.N}: "
           f"iterations={sum(iters)} (max {max(iters)}/step) admissibility={stepper.coeff:.6g}")
    if exact_u:
        msg += f" err_u={summary['err_u']:.4e} err_y={summary['err_y']:.4e}"
    say(msg)
    return summary


def _do_study(cfg: RunConfig, out: Path, say) -> dict:
    case = get_case(cfg.case, cfg.p)
    coeff_of = lambda N: 0.5 + (case.T / N) * case.kernel.g0 / 8.0

    def report(lv):
        say(f"level m={lv.m} N={lv.N}: err_u={lv.err_u:.4e} err_y={lv.err_y:.4e} "
            f"iterations={lv.iterations} (max {lv.max_iterations}/step) "
            f"admissibility={coeff_of(lv.N):.6g}")

    if cfg.mode == "study-space":
        steps = (lambda m: cfg.N) if cfg.N is not None else (lambda m: cfg.N_factor * m)
        table = spatial_study(case, cfg.r, cfg.m_list, steps, cfg.solver, on_level=report)
    else:
        table = temporal_study(case, cfg.r, cfg.m, cfg.N_list, cfg.solver, on_level=report)
    (out / "eoc.csv").write_text(table.to_csv())
    return {"case": case.name, "p": case.p, "r": cfg.r, "axis": table.axis,
            "levels": [asdict(lv) | {"seconds": None} for lv in table.levels],
            "eoc_u": table.eoc_u, "eoc_y": table.eoc_y}


def _do_validate(cfg: RunConfig, out: Path, say) -> dict:
    report = validate_case(get_case(cfg.case, cfg.p))
    say(f"validate {report['case']} p={report['p']:g}: pde_residual={report['pde_residual']:.3e} "
        f"oracle_gap={report['oracle_gap']:.3e} -> {'PASS' if report['passed'] else 'FAIL'}")
    return report


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plapmem", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in MODES:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="JSON run configuration")
        sp.add_argument("--out", default=None, help="output directory (default: config output.dir or .)")
        sp.add_argument("--seed", type=int, default=None, help="recorded in meta.json; seeds test data only")
        sp.add_argument("--quiet", action="store_true")
    return parser


def run_cli(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    say = (lambda msg: None) if args.quiet else print
    try:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc.strerror}") from None
        cfg = parse_config(text, args.command)
        out = Path(args.out or cfg.output_dir or ".")
        out.mkdir(parents=True, exist_ok=True)
        handler = {"solve": _do_solve, "study-space": _do_study, "study-time": _do_study,
                   "validate": _do_validate}[cfg.mode]
        summary = handler(cfg, out, say)
        _write_meta(out, cfg, summary, args.seed)
        if cfg.mode == "validate" and not summary["passed"]:
            return 1
        return 0
    except InadmissibleStep as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except NonConvergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, InvalidArgument) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
