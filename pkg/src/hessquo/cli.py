"""
Command line front end: ``hessquo {solve,sweep,check-subsolution,verify}``.

Configs are JSON with three sections (``problem``, ``solver``, ``output``);
see the README for the schema. Exit status is 0 on success, 1 on a
configuration error and 2 on a solver (or check) failure.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .expr import Expression, ExpressionError
from .grid import GridDomain, ProblemSpec, ScalarField, gradient_field, hessian_field
from .hessop import OperatorSpec
from .solver import (
    PreconditionError,
    SolveReport,
    SolverConfig,
    comparison_check,
    initial_guess,
    max_principle_bound,
    newton_solve,
    regularized_sweep,
    subsolution_check,
)

log = logging.getLogger("hessquo")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2
REPORT_DIR_ENV = "HESSQUO_REPORT_DIR"
_AXES = ("x1", "x2", "x3")
_NORMALS = ("n1", "n2", "n3")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class OperatorConfig:
    k: int = 1
    l: int = 0
    gamma: float = 1.0
    sign: int = -1
    n: Optional[int] = None  # defaults to the problem dimension


@dataclass(frozen=True)
class ProblemConfig:
    dimension: int
    f: str
    phi: str
    phi_z: str
    resolution: int = 32
    lower: Optional[tuple] = None
    upper: Optional[tuple] = None
    operator: OperatorConfig = OperatorConfig()
    f_z: str = "0"
    beta: Optional[tuple] = None  # component expressions; None means the inner normal
    beta0: float = 1e-3
    corner_policy: str = "average"
    gamma0: float = 1.0
    subsolution: Optional[str] = None


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "reports"
    name: Optional[str] = None
    field_dump: bool = False
    convergence_table: bool = True


@dataclass(frozen=True)
class RunConfig:
    problem: ProblemConfig
    solver: SolverConfig
    output: OutputConfig = OutputConfig()

    def to_dict(self) -> dict:
        return {
            "problem": _plain(dataclasses.asdict(self.problem)),
            "solver": dataclasses.asdict(self.solver),
            "output": dataclasses.asdict(self.output),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


# -- parsing -----------------------------------------------------------------


def _section(raw, cls, where: str) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected an object, got {type(raw).__name__}")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}; allowed: {', '.join(sorted(known))}")
    missing = [
        f.name
        for f in fields(cls)
        if f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING and f.name not in raw
    ]
    if missing:
        raise ConfigError(f"{where}: missing required key(s) {', '.join(missing)}")
    return dict(raw)


def _number(value, where: str, integer: bool = False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    if integer:
        if int(value) != value:
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return int(value)
    if not math.isfinite(value):
        raise ConfigError(f"{where}: must be finite")
    return float(value)


def _expr_text(value, where: str) -> str:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return repr(float(value))
    if not isinstance(value, str):
        raise ConfigError(f"{where}: expected an expression string, got {value!r}")
    return value


def _vector(value, d: int, where: str) -> tuple:
    if not isinstance(value, (list, tuple)) or len(value) != d:
        raise ConfigError(f"{where}: expected a list of {d} numbers")
    return tuple(_number(v, f"{where}[{i}]") for i, v in enumerate(value))


def _build_problem_config(raw) -> ProblemConfig:
    raw = _section(raw, ProblemConfig, "problem")
    d = _number(raw["dimension"], "problem.dimension", integer=True)
    if d not in (2, 3):
        raise ConfigError("problem.dimension: must be 2 or 3")
    out = {"dimension": d}
    out["resolution"] = _number(raw.get("resolution", 32), "problem.resolution", integer=True)
    for key in ("lower", "upper"):
        if raw.get(key) is not None:
            out[key] = _vector(raw[key], d, f"problem.{key}")
    op_raw = _section(raw.get("operator", {}), OperatorConfig, "problem.operator")
    op = OperatorConfig(
        k=_number(op_raw.get("k", 1), "problem.operator.k", integer=True),
        l=_number(op_raw.get("l", 0), "problem.operator.l", integer=True),
        gamma=_number(op_raw.get("gamma", 1.0), "problem.operator.gamma"),
        sign=_number(op_raw.get("sign", -1), "problem.operator.sign", integer=True),
        n=d if op_raw.get("n") is None else _number(op_raw["n"], "problem.operator.n", integer=True),
    )
    out["operator"] = op
    for key in ("f", "f_z", "phi", "phi_z"):
        if key in raw:
            out[key] = _expr_text(raw[key], f"problem.{key}")
    if raw.get("beta") is not None:
        b = raw["beta"]
        if not isinstance(b, (list, tuple)) or len(b) != d:
            raise ConfigError(f"problem.beta: expected a list of {d} expressions")
        out["beta"] = tuple(_expr_text(v, f"problem.beta[{i}]") for i, v in enumerate(b))
    for key in ("beta0", "gamma0"):
        if key in raw:
            out[key] = _number(raw[key], f"problem.{key}")
    if raw.get("subsolution") is not None:
        out["subsolution"] = _expr_text(raw["subsolution"], "problem.subsolution")
    if "corner_policy" in raw:
        if raw["corner_policy"] not in ("average", "normalized"):
            raise ConfigError("problem.corner_policy: must be \"average\" or \"normalized\"")
        out["corner_policy"] = raw["corner_policy"]
    return ProblemConfig(**out)


def _build_solver_config(raw) -> SolverConfig:
    raw = _section(raw, SolverConfig, "solver")
    ints = {"max_iter", "max_halvings"}
    vals = {k: _number(v, f"solver.{k}", integer=k in ints) for k, v in raw.items()}
    try:
        return SolverConfig(**vals)
    except ValueError as exc:
        raise ConfigError(f"solver: {exc}") from None


def _build_output_config(raw) -> OutputConfig:
    raw = _section(raw, OutputConfig, "output")
    for key in ("field_dump", "convergence_table"):
        if key in raw and not isinstance(raw[key], bool):
            raise ConfigError(f"output.{key}: expected true or false")
    for key in ("directory", "name"):
        if raw.get(key) is not None and not isinstance(raw[key], str):
            raise ConfigError(f"output.{key}: expected a string")
    return OutputConfig(**raw)


def parse_config(text: str) -> RunConfig:
    """Parse and validate a JSON config. Raises :class:`ConfigError`."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"syntax error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise ConfigError("top level must be an object")
    unknown = sorted(set(raw) - {"problem", "solver", "output"})
    if unknown:
        raise ConfigError(f"unknown top-level key(s) {', '.join(unknown)}; allowed: output, problem, solver")
    if "problem" not in raw:
        raise ConfigError("missing required section 'problem'")
    cfg = RunConfig(
        problem=_build_problem_config(raw["problem"]),
        solver=_build_solver_config(raw.get("solver", {})),
        output=_build_output_config(raw.get("output", {})),
    )
    _check_operator(cfg.problem)
    _check_expressions(cfg.problem)
    return cfg


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text)


def operator_spec(pc: ProblemConfig) -> OperatorSpec:
    o = pc.operator
    return OperatorSpec(o.n, o.k, o.l, o.gamma, o.sign)


def _check_operator(pc: ProblemConfig) -> None:
    try:
        spec = operator_spec(pc)
    except ValueError as exc:
        raise ConfigError(f"problem.operator: {exc}") from None
    if spec.n != pc.dimension:
        raise ConfigError(f"problem.operator.n: must equal problem.dimension ({pc.dimension})")


def _compiled(pc: ProblemConfig) -> dict:
    d = pc.dimension
    xs, ns = _AXES[:d], _NORMALS[:d]
    specs = [(key, getattr(pc, key), xs + ("z",)) for key in ("f", "f_z")]
    specs += [(key, getattr(pc, key), xs + ("z",) + ns) for key in ("phi", "phi_z")]
    if pc.subsolution is not None:
        specs.append(("subsolution", pc.subsolution, xs))
    out = {}
    for key, text, names in specs:
        try:
            out[key] = Expression(text, names)
        except ExpressionError as exc:
            raise ConfigError(f"problem.{key}: {exc}") from None
    if pc.beta is not None:
        out["beta"] = []
        for i, text in enumerate(pc.beta):
            try:
                out["beta"].append(Expression(text, xs + ns))
            except ExpressionError as exc:
                raise ConfigError(f"problem.beta[{i}]: {exc}") from None
    return out


def _check_expressions(pc: ProblemConfig) -> None:
    """Every expression is finite on a 5^d lattice of the box, z in {-1, 0, 1}, each face normal."""
    d = pc.dimension
    lo = np.asarray(pc.lower or (0.0,) * d)
    hi = np.asarray(pc.upper or (1.0,) * d)
    t = np.linspace(0.0, 1.0, 5)
    pts = lo + (hi - lo) * np.stack(np.meshgrid(*([t] * d), indexing="ij"), axis=-1).reshape(-1, d)
    xs = {_AXES[a]: pts[:, a] for a in range(d)}
    normals = [s * np.eye(d)[a] for a in range(d) for s in (1.0, -1.0)]
    for key, ex in _compiled(pc).items():
        exprs = ex if isinstance(ex, list) else [ex]
        for e in exprs:
            for z in (-1.0, 0.0, 1.0):
                for nu in normals:
                    env = dict(xs)
                    if "z" in e.variables:
                        env["z"] = z
                    for a in range(d):
                        if _NORMALS[a] in e.variables:
                            env[_NORMALS[a]] = nu[a]
                    if not np.all(np.isfinite(e(**env))):
                        raise ConfigError(f"problem.{key}: {e.text!r} is not finite on the sample lattice")


# -- problem construction ----------------------------------------------------


def _env(x, d, z=None, nu=None):
    env = {_AXES[a]: x[:, a] for a in range(d)}
    if z is not None:
        env["z"] = z
    if nu is not None:
        env.update({_NORMALS[a]: nu[:, a] for a in range(d)})
    return env


def _pick(e: Expression, env: dict) -> dict:
    return {k: v for k, v in env.items() if k in e.variables}


def build_problem(cfg: RunConfig) -> ProblemSpec:
    """Grid, operator and data callables for a parsed config. Data violations raise ConfigError."""
    pc = cfg.problem
    d = pc.dimension
    ex = _compiled(pc)

    def scalar(e, with_normal):
        if with_normal:
            return lambda x, z, nu: e(**_pick(e, _env(x, d, z, nu)))
        return lambda x, z: e(**_pick(e, _env(x, d, z)))

    kwargs = {}
    if "beta" in ex:
        comps = ex["beta"]
        kwargs["beta"] = lambda x, nu: np.stack([c(**_pick(c, _env(x, d, nu=nu))) for c in comps], axis=1)
    try:
        dom = GridDomain(d, pc.resolution, pc.lower, pc.upper, beta0=pc.beta0, corner_policy=pc.corner_policy, **kwargs)
        p = ProblemSpec(
            dom,
            operator_spec(pc),
            scalar(ex["f"], False),
            scalar(ex["f_z"], False),
            scalar(ex["phi"], True),
            scalar(ex["phi_z"], True),
            pc.gamma0,
        )
        if "subsolution" in ex:
            e = ex["subsolution"]
            p = dataclasses.replace(p, subsolution=ScalarField(dom, e(**_env(dom.coords, d))))
        p.validate()
    except ValueError as exc:
        raise ConfigError(f"problem: {exc}") from None
    return p


# -- reports -----------------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return _jsonable(obj.item())
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def _g(v) -> str:
    return "" if v is None else format(float(v), ".17g")


def stage_summary(rep: SolveReport) -> dict:
    keys = (
        "epsilon",
        "converged",
        "status",
        "iterations",
        "interior_residual",
        "boundary_residual",
        "sup_u",
        "sup_Du",
        "sup_D2u",
        "min_margin",
    )
    out = {k: getattr(rep, k) for k in keys}
    out["final_residual"] = rep.residual_history[-1] if rep.residual_history else None
    return out


def report_dir(cfg: RunConfig) -> Path:
    return Path(os.environ.get(REPORT_DIR_ENV) or cfg.output.directory)


def emit_report(reports, cfg: RunConfig, mode: str, extra: Optional[dict] = None, name: str = "run") -> list:
    """
    Write ``<name>.json`` (summary with one entry per stage), one convergence
    table per stage and optionally the final field dump. Returns the paths.
    """
    reports = list(reports)
    out = report_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    name = cfg.output.name or name
    final = reports[-1] if reports else None
    summary = {
        "mode": mode,
        "converged": bool(reports) and all(r.converged for r in reports),
        "status": final.status if final else "not_run",
        "stages": [stage_summary(r) for r in reports],
        "config": cfg.to_dict(),
    }
    if extra:
        summary.update(extra)
    written = []
    path = out / f"{name}.json"
    path.write_text(json.dumps(_jsonable(summary), indent=2, allow_nan=False) + "\n", encoding="utf-8")
    written.append(path)
    if cfg.output.convergence_table:
        for i, rep in enumerate(reports):
            suffix = "" if len(reports) == 1 else f"_stage{i}"
            path = out / f"{name}_convergence{suffix}.csv"
            with path.open("w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["iteration", "residual", "step"])
                steps = [None] + list(rep.step_history)
                for it, (res, st) in enumerate(zip(rep.residual_history, steps)):
                    w.writerow([it, _g(res), _g(st)])
            written.append(path)
    if cfg.output.field_dump and final is not None and final.solution is not None:
        written.append(dump_field(final.solution, out / f"{name}_field.csv"))
    return written


def dump_field(u: ScalarField, path: Path) -> Path:
    dom = u.domain
    du = np.linalg.norm(gradient_field(u), axis=1)
    d2 = np.abs(hessian_field(u)).max(axis=(1, 2))
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(_AXES[: dom.d]) + ["u", "|Du|", "maxabs_D2u"])
        for x, v, g, s in zip(dom.coords, u.values, du, d2):
            w.writerow([_g(c) for c in x] + [_g(v), _g(g), _g(s)])
    return Path(path)


# -- commands ----------------------------------------------------------------


def _post_checks(u: ScalarField, p: ProblemSpec) -> dict:
    extra = {}
    bound = max_principle_bound(u, p)
    extra["max_principle"] = dataclasses.asdict(bound)
    if p.subsolution is not None:
        try:
            cmp = comparison_check(u, p.subsolution, p)
            extra["comparison"] = dataclasses.asdict(cmp)
        except PreconditionError as exc:
            extra["comparison"] = {"precondition_failed": str(exc)}
    return extra


def run_solve(cfg: RunConfig, sweep: bool = False, name: str = "run") -> int:
    """
    Run one config. ``solve`` does a plain Newton solve when the epsilon
    schedule has one stage and a sweep otherwise; ``sweep`` always sweeps.
    """
    try:
        p = build_problem(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    schedule = cfg.solver.epsilon_schedule()
    mode = "sweep" if sweep or len(schedule) > 1 else "solve"
    try:
        if mode == "sweep":
            reports = regularized_sweep(p, cfg.solver)
        else:
            _, rep = newton_solve(p, initial_guess(p, cfg.solver.eps0), cfg.solver)
            reports = [rep]
    except ValueError as exc:
        # inadmissible starting field and similar
        print(f"solver error: {exc}", file=sys.stderr)
        emit_report([], cfg, mode, {"error": str(exc)}, name)
        return EXIT_SOLVER
    final = reports[-1]
    extra = _post_checks(final.solution, p) if final.converged else {}
    if mode == "sweep" and len(reports) < len(schedule):
        extra["aborted_at_stage"] = len(reports) - 1
    paths = emit_report(reports, cfg, mode, extra, name)
    ok = all(r.converged for r in reports) and len(reports) == (len(schedule) if mode == "sweep" else 1)
    print(
        f"{name}: {mode} {'converged' if ok else 'FAILED'} status={final.status} "
        f"stages={len(reports)} iterations={sum(r.iterations for r in reports)} "
        f"residual={final.residual_history[-1]:.3e} report={paths[0]}"
    )
    if not ok:
        print(f"solver failure: {final.status}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def run_check_subsolution(cfg: RunConfig, name: str = "run", boundary: str = "inequality") -> int:
    try:
        p = build_problem(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if p.subsolution is None:
        print("config error: problem.subsolution is required for check-subsolution", file=sys.stderr)
        return EXIT_CONFIG
    try:
        res = subsolution_check(p.subsolution, p, boundary=boundary)
    except ValueError as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    out = report_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{cfg.output.name or name}_subsolution.json"
    body = {"boundary_mode": boundary, **dataclasses.asdict(res)}
    path.write_text(json.dumps(_jsonable(body), indent=2) + "\n", encoding="utf-8")
    print(
        f"{name}: subsolution {'PASS' if res.passed else 'FAIL'} interior_margin={res.interior_margin:.3e} "
        f"boundary_min={res.boundary_min:.3e}"
    )
    return EXIT_OK if res.passed else EXIT_SOLVER


def run_verify(scale: float = 1.0, out: Optional[str] = None) -> int:
    from .verify import run_all

    results = run_all(scale)
    for r in results:
        print(r.line())
    if out:
        Path(out).write_text(json.dumps(_jsonable([dataclasses.asdict(r) for r in results]), indent=2) + "\n")
    return EXIT_OK if all(r.passed for r in results) else EXIT_SOLVER


def _run_path(command: str, path: str, boundary: str) -> int:
    try:
        cfg = load_config(path)
    except ConfigError as exc:
        print(f"config error in {path}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    name = Path(path).stem
    if command == "check-subsolution":
        return run_check_subsolution(cfg, name, boundary)
    return run_solve(cfg, sweep=command == "sweep", name=name)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hessquo", description="Hessian quotient equations with oblique boundary data.")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)
    for cmd, hlp in (
        ("solve", "damped Newton solve (a sweep if the epsilon schedule has several stages)"),
        ("sweep", "epsilon-regularization sweep with warm starts"),
        ("check-subsolution", "check the configured subsolution expression"),
    ):
        sp = sub.add_parser(cmd, help=hlp)
        sp.add_argument("configs", nargs="+", help="JSON config file(s)")
        sp.add_argument("--jobs", type=int, default=1, help="run independent configs concurrently")
        sp.add_argument("--show-config", action="store_true", help="print the config with defaults applied")
        if cmd == "check-subsolution":
            sp.add_argument("--boundary", choices=("inequality", "equality"), default="inequality")
    vp = sub.add_parser("verify", help="run the property suites")
    vp.add_argument("--scale", type=float, default=1.0, help="fraction of the full sample counts")
    vp.add_argument("--json", help="also write results to this file")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=[logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)],
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.command == "verify":
        if not args.scale > 0:
            print("config error: --scale must be positive", file=sys.stderr)
            return EXIT_CONFIG
        return run_verify(args.scale, args.json)
    if args.show_config:
        for path in args.configs:
            try:
                print(load_config(path).to_json())
            except ConfigError as exc:
                print(f"config error in {path}: {exc}", file=sys.stderr)
                return EXIT_CONFIG
    boundary = getattr(args, "boundary", "inequality")
    if args.jobs > 1 and len(args.configs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            codes = list(pool.map(_run_path, [args.command] * len(args.configs), args.configs, [boundary] * len(args.configs)))
    else:
        codes = [_run_path(args.command, path, boundary) for path in args.configs]
    # a config error anywhere wins over solver failures
    if EXIT_CONFIG in codes:
        return EXIT_CONFIG
    return max(codes)


if __name__ == "__main__":
    sys.exit(main())
