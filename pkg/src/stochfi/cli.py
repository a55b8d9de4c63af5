"""Command line interface.

    stochfi construct CONFIG   build the conserving system and check it
    stochfi control CONFIG     synthesize the program control
    stochfi simulate CONFIG    Monte-Carlo conservation study
    stochfi demo               worked example, end to end

Exit codes: 0 pass, 1 acceptance failure, 2 invalid config, 3 numeric failure.
The default output directory is ``$STOCHFI_OUT`` (else ``stochfi_out``).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from itertools import product
from pathlib import Path

import numpy as np

from .construct import SdeSystem, construct_system
from .control import ControlledSystem, ProgramControl, residual_report, synthesize
from .expr import EvaluationError, ExprError, parse, variables_for
from .integral import DegenerateIntegralError, FirstIntegral, FreeFamily
from .linalg import SingularMatrixError
from .ode import StepSizeError
from .sim import MarkLaw, monte_carlo
from .verify import Domain, check_conditions
from .config import WORKED_EXAMPLE, ConfigError, ProblemConfig, load_config

log = logging.getLogger("stochfi")

EXIT_OK, EXIT_FAIL, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2, 3
OUT_ENV = "STOCHFI_OUT"


# ---------------------------------------------------------------------------
# pipeline pieces


def _names(n: int) -> list[str]:
    return [v for v in variables_for(n) if v != "gamma"]


def build_integral(cfg: ProblemConfig) -> FirstIntegral:
    return FirstIntegral.from_string(cfg.u, cfg.n)


def construct_kwargs(cfg: ProblemConfig) -> dict:
    names = _names(cfg.n)
    kw = {
        "anchor": (0.0, cfg.x0_or_default),
        "cofactor_tol": cfg.cofactor_tol,
        "ode_rtol": cfg.ode_rtol,
    }
    if isinstance(cfg.q00, list):
        kw["scales"] = [parse(q, names) for q in cfg.q00]
        q_default = kw["scales"][0]
    else:
        q_default = parse(cfg.q00, names)
        kw["q00"] = q_default
    if cfg.diffusion_family is not None:
        kw["diffusion_family"] = FreeFamily("diffusion", tuple(parse(e, names) for e in cfg.diffusion_family), q_default)
    if cfg.jump_family is not None:
        kw["jump_family"] = FreeFamily("jump", tuple(parse(e, names) for e in cfg.jump_family))
    return kw


def build_system(cfg: ProblemConfig, fi: FirstIntegral) -> SdeSystem:
    return construct_system(fi, m=cfg.m, mark_space=tuple(cfg.mark_space), **construct_kwargs(cfg))


def build_controlled(cfg: ProblemConfig) -> ControlledSystem:
    return ControlledSystem.from_exprs(cfg.n, cfg.control["P"], cfg.control["Q"], cfg.m, tuple(cfg.mark_space))


def mark_law(cfg: ProblemConfig) -> MarkLaw:
    return MarkLaw(intensity=float(cfg.intensity), **cfg._law_kwargs())


def domain_of(cfg: ProblemConfig) -> Domain:
    if cfg.domain is not None:
        return Domain.box(cfg.domain["t"], *cfg.domain["x"])
    x0 = cfg.x0_or_default
    return Domain.box((0.0, cfg.T), *((v - 1.0, v + 1.0) for v in x0))


def summary_grid(domain: Domain, per_axis: int | None = None) -> list:
    per_axis = per_axis or (5 if domain.n <= 3 else 3)
    axes = [np.linspace(lo, hi, per_axis) for lo, hi in domain.x_ranges]
    t = domain.t_range[0]
    return [(t, np.array(p)) for p in product(*axes)]


def _fmt(v: float) -> str:
    return repr(float(v))


def write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def write_system_summary(out: Path, system: SdeSystem, domain: Domain, gamma: float) -> None:
    n, m = system.n, system.m
    s = system.summary
    lines = [f"u(t, x) = {s.get('u')}", f"n = {n}, m = {m}, mark space = {list(system.mark_space)}"]
    lines.append(f"diffusion family = {s.get('diffusion_family')}, q00 = {s.get('q00')}")
    lines.append(f"jump family = {s.get('jump_family')}")
    if s.get("diffusion") is not None:
        for k, col in enumerate(s["diffusion"], 1):
            lines.append(f"B_{k} = ({', '.join(col)})")
    lines.append("A = R + 1/2 sum_k J(B_k) B_k (evaluated pointwise)")
    lines.append("G = y(gamma) - x, y' = orthogonal complement of grad u (evaluated numerically)")
    (out / "system.txt").write_text("\n".join(lines) + "\n")
    with open(out / "system_grid.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(
            ["t", *(f"x{i}" for i in range(1, n + 1)), *(f"a{i}" for i in range(1, n + 1))]
            + [f"b{i}{k}" for i in range(1, n + 1) for k in range(1, m + 1)]
            + [*(f"g{i}" for i in range(1, n + 1)), "gamma"]
        )
        for t, x in summary_grid(domain):
            try:
                A = system.drift(t, x)
                B = system.diffusion(t, x)
                G = system.jump(t, x, gamma)
            except (ArithmeticError, ValueError):
                continue
            w.writerow([_fmt(t), *map(_fmt, x), *map(_fmt, A), *map(_fmt, B.ravel()), *map(_fmt, G), _fmt(gamma)])


def run_construct(cfg: ProblemConfig, out: Path) -> tuple[int, dict]:
    fi = build_integral(cfg)
    system = build_system(cfg, fi)
    domain = domain_of(cfg)
    report = check_conditions(system, fi, domain, cfg.n_samples, cfg.tol)
    gamma = 0.5 * (cfg.mark_space[0] + cfg.mark_space[1])
    write_system_summary(out, system, domain, gamma)
    write_json(out / "check_report.json", report.to_dict())
    print(report)
    return (EXIT_OK if report.passed else EXIT_FAIL), {"system": system, "report": report, "integral": fi}


def run_control(cfg: ProblemConfig, out: Path) -> tuple[int, dict]:
    if cfg.control is None:
        raise ConfigError("missing required field", "control")
    fi = build_integral(cfg)
    cs = build_controlled(cfg)
    domain = domain_of(cfg)
    grid = summary_grid(domain)
    pc, target = synthesize(cs, fi, points=grid, **construct_kwargs(cfg))
    rep = residual_report(pc, cs, grid)
    n = cfg.n
    with open(out / "control_grid.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", *(f"x{i}" for i in range(1, n + 1)), *(f"s{i}" for i in range(1, n + 1)), "residual"])
        for (t, x), r in zip(rep.points, rep.residuals):
            w.writerow([_fmt(t), *map(_fmt, x), *map(_fmt, pc(t, x)), _fmt(r)])
    scale = max(1.0, max(np.max(np.abs(target.drift(t, x))) for t, x in grid))
    ok = rep.max <= 1e-10 * scale
    write_json(
        out / "control_report.json",
        {
            "P": cs.summary["P"],
            "Q": cs.summary["Q"],
            "max_residual": rep.max,
            "scale": scale,
            "passed": ok,
            "reactions": {"diffusion": target.summary.get("diffusion"), "jump_family": target.summary.get("jump_family"), "q00": target.summary.get("q00")},
        },
    )
    gamma = 0.5 * (cfg.mark_space[0] + cfg.mark_space[1])
    write_system_summary(out, target, domain, gamma)
    print(f"control residual max {rep.max:.3e} (scale {scale:.3g}) -> {'ok' if ok else 'FAIL'}")
    return (EXIT_OK if ok else EXIT_FAIL), {"control": pc, "target": target, "residuals": rep, "integral": fi}


def run_simulate(cfg: ProblemConfig, out: Path, system: SdeSystem | None = None, fi: FirstIntegral | None = None) -> tuple[int, dict]:
    if cfg.x0 is None:
        raise ConfigError("missing required field", "x0")
    fi = fi or build_integral(cfg)
    if system is None:
        if cfg.control is not None:
            pc, _ = synthesize(build_controlled(cfg), fi, **construct_kwargs(cfg))
            system = pc.closed_loop()
        else:
            system = build_system(cfg, fi)
    law = mark_law(cfg)
    stats = monte_carlo(
        system, cfg.x0, cfg.T, cfg.dt, law, cfg.n_paths, cfg.seed, integral=fi, bound=cfg.acceptance_bound, keep_paths=True
    )
    pdir = out / "paths"
    pdir.mkdir(parents=True, exist_ok=True)
    for i, p in enumerate(stats.paths):
        if p is not None:
            p.to_csv(pdir / f"path_{i:04d}.csv")
    write_json(out / "stats.json", stats.to_dict())
    print(
        f"{cfg.n_paths} paths, max deviation {stats.max:.3e}, mean {stats.mean:.3e}, "
        f"failed {stats.n_failed}, bound {cfg.acceptance_bound} -> {'ok' if stats.passed else 'FAIL'}"
    )
    return (EXIT_OK if stats.passed else EXIT_FAIL), {"stats": stats, "system": system}


def run_demo(cfg: ProblemConfig, out: Path) -> int:
    code, built = run_construct(cfg, out)
    system, fi = built["system"], built["integral"]
    q00 = float(cfg.q00) if _is_const(cfg.q00) else None

    print("\nB(t, x) =", ", ".join(f"({', '.join(c)})" for c in system.summary["diffusion"]))
    print("closed-form jump: g1 = 1/2 ln(2 gamma + exp(2 x1)) - x1,  g2 = 2 x2 gamma exp(-2 x1)")
    err = 0.0
    for x1, x2, g in product(np.linspace(-1, 1, 10), np.linspace(0.5, 2, 10), np.linspace(0, 1, 10)):
        G = system.jump(0.0, np.array([x1, x2]), g)
        ref = (0.5 * math.log(2 * g + math.exp(2 * x1)) - x1, 2 * x2 * g * math.exp(-2 * x1))
        err = max(err, abs(G[0] - ref[0]), abs(G[1] - ref[1]))
    g_ok = err <= 1e-8
    print(f"max |G - closed form| on 10x10x10 grid: {err:.3e} -> {'ok' if g_ok else 'FAIL'}")
    drift_ok = True
    if q00 is not None:
        derr = max(
            abs(system.drift(0.0, x)[0] + q00**2 * math.exp(-4 * x[0])) + abs(system.drift(0.0, x)[1])
            for _, x in summary_grid(domain_of(cfg))
        )
        drift_ok = derr <= 1e-10
        print(f"A(x) = (-q00^2 exp(-4 x1), 0) with q00 = {q00}: max deviation {derr:.3e} -> {'ok' if drift_ok else 'FAIL'}")

    ccode, cbuilt = run_control(cfg, out)
    pc = cbuilt["control"]
    print("s1 = a1 - x1 - x2 - exp(-t),  s2 = a2 - x1 x2 - exp(-2t)")
    for t, x in [(0.0, np.array([0.0, 1.0])), (0.5, np.array([0.3, 1.2]))]:
        s = pc(t, x)
        print(f"  s({t}, {x.tolist()}) = {s.tolist()}")

    scode, _ = run_simulate(cfg, out, system=pc.closed_loop(), fi=fi)
    codes = [code, ccode, scode, EXIT_OK if (g_ok and drift_ok) else EXIT_FAIL]
    return max(codes)


def _is_const(q) -> bool:
    if not isinstance(q, str):
        return False
    try:
        float(q)
        return True
    except ValueError:
        return False


# ---------------------------------------------------------------------------
# argument handling


def _apply_overrides(cfg: ProblemConfig, args) -> ProblemConfig:
    data = cfg.to_dict()
    if getattr(args, "seed", None) is not None:
        data["seed"] = args.seed
    if getattr(args, "dt", None) is not None:
        data["dt"] = args.dt
    if getattr(args, "paths", None) is not None:
        data["n_paths"] = args.paths
    if getattr(args, "tol", None) is not None:
        data["tol"] = args.tol
    return ProblemConfig.from_dict(data)


def _output_dir(cfg: ProblemConfig, args) -> Path:
    out = args.out or cfg.output_dir or os.environ.get(OUT_ENV) or "stochfi_out"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stochfi", description="Jump diffusions conserving a first integral.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("construct", "build the conserving system and check it"),
        ("control", "synthesize the program control"),
        ("simulate", "Monte-Carlo conservation study"),
        ("demo", "worked example end to end"),
    ):
        p = sub.add_parser(name, help=helptext)
        if name != "demo":
            p.add_argument("config", help="problem file (JSON)")
        p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./stochfi_out)")
        p.add_argument("--seed", type=int)
        p.add_argument("--dt", type=float)
        p.add_argument("--paths", type=int)
        p.add_argument("--tol", type=float)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    args = make_parser().parse_args(argv)
    try:
        cfg = ProblemConfig.from_dict(dict(WORKED_EXAMPLE)) if args.command == "demo" else load_config(args.config)
        cfg = _apply_overrides(cfg, args)
        out = _output_dir(cfg, args)
        (out / "effective_config.json").write_text(cfg.to_json() + "\n")
        if args.command == "construct":
            return run_construct(cfg, out)[0]
        if args.command == "control":
            return run_control(cfg, out)[0]
        if args.command == "simulate":
            return run_simulate(cfg, out)[0]
        return run_demo(cfg, out)
    except EvaluationError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ExprError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (DegenerateIntegralError, SingularMatrixError, StepSizeError, ArithmeticError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
