"""Command-line entry point.

Exit codes: 0 success, 1 unexpected error, 2 invalid input, 3 divergence,
4 infeasible optimisation problem.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .controller import ControllerError
from .curves import CurveError, DeliveryCurve
from .distributed import ConsensusError, GraphError
from .grid import GridError
from .harness import RunAborted, bench, compare, run, run_variants
from .oracle import InfeasibleProblem, InstantProblem, solve_instant, validate_theorem1
from .scenario import (ScenarioError, list_scenarios, load_scenario, parse_scenario,
                       resolve_path, with_algorithm)

EXIT_OK, EXIT_OTHER, EXIT_INVALID, EXIT_DIVERGED, EXIT_INFEASIBLE = 0, 1, 2, 3, 4
VALIDATION_ERRORS = (ScenarioError, ControllerError, CurveError, GridError, GraphError,
                     ConsensusError, FileNotFoundError, ValueError)

log = logging.getLogger("fvo")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _load(args):
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.dt is not None:
        overrides["dt"] = args.dt / 1000.0
    if getattr(args, "horizon", None) is not None:
        overrides["horizon"] = args.horizon
    algorithm = getattr(args, "algorithm", None)
    if algorithm is None:
        return load_scenario(args.scenario, **overrides)
    path = resolve_path(args.scenario)
    doc = yaml.safe_load(path.read_text())
    return parse_scenario(with_algorithm(doc, algorithm), path.parent, path.stem, overrides)


def _print_json(obj) -> None:
    print(json.dumps(obj, indent=2, default=str))


def cmd_run(args) -> int:
    sc = _load(args)
    res = run(sc, args.out, write_trace=not args.no_trace)
    for name, m in res.metrics.items():
        T = "not reached" if m.convergence_time is None else f"{m.convergence_time:.3f} s"
        print(f"{name}: {m.algorithm}/{m.mode}  T={T}  T_max={m.t_max_bound:.4f} s  "
              f"max|mismatch| after T={m.max_mismatch_after}  "
              f"gamma3 margin={m.gamma3_margin}  violations={m.feasibility_violations}")
    if res.trace_path is not None:
        print(f"trace: {res.trace_path}")
    if res.manifest_path is not None:
        print(f"manifest: {res.manifest_path}")
    return EXIT_OK


def cmd_compare(args) -> int:
    sc = _load(args)
    if sc.variants:
        _, report = run_variants(sc, args.out, write_trace=args.out is not None)
    else:
        if len(sc.arus) < 2:
            raise ScenarioError("arus", "compare needs compare variants or several ARUs")
        res = run(sc, args.out, write_trace=args.out is not None)
        runs = [(name, res.t, m) for name, m in res.mismatch.items()]
        report = compare(runs, args.window_start, sc.horizon)
    _print_json(report)
    if args.out is not None:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "compare.json").write_text(json.dumps(report, indent=2) + "\n")
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = {}
    seed = 0
    if args.scenario is not None:
        sc = load_scenario(args.scenario)
        cfg = dict(sc.resolved.get("bench") or {})
        seed = sc.seed
    if args.seed is not None:
        seed = args.seed
    sizes = args.sizes or cfg.get("sizes", [30, 60, 120])
    modes = args.modes or cfg.get("modes", ["centralized", "distributed"])
    report = bench(sizes, modes, algorithm=args.algorithm or cfg.get("algorithm", "tot2"),
                   steps=args.steps or cfg.get("steps", 2000),
                   repeats=args.repeats or cfg.get("repeats", 3), seed=seed)
    print(f"{'n':>6} {'mode':>12} {'interval [us]':>14} {'reported [us]':>14}")
    for row in report["rows"]:
        print(f"{row['n']:>6} {row['mode']:>12} {row['interval_time'] * 1e6:>14.1f} "
              f"{row['reported_time'] * 1e6:>14.1f}")
    for mode, k in report["exponents"].items():
        print(f"scaling exponent ({mode}): {k:.3f}")
    if args.out is not None:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "bench.json").write_text(json.dumps(report, indent=2) + "\n")
    return EXIT_OK


def cmd_solve_instant(args) -> int:
    fields = {}
    if args.problem is not None:
        doc = yaml.safe_load(Path(args.problem).read_text())
        if not isinstance(doc, dict):
            raise ValueError(f"{args.problem}: expected a mapping")
        fields.update(doc)
    for key in ("a", "b", "lo", "hi", "required", "c", "deviation"):
        if getattr(args, key) is not None:
            fields[key] = getattr(args, key)
    missing = [k for k in ("a", "lo", "hi", "required") if k not in fields]
    if missing:
        raise ValueError(f"problem is missing {', '.join(missing)}")
    fields.setdefault("b", 0.0)
    prob = InstantProblem(fields["a"], fields["b"], fields["lo"], fields["hi"],
                          fields["required"], c=fields.get("c"),
                          deviation=fields.get("deviation", 0.0))
    sol = solve_instant(prob)
    _print_json(dict(x=sol.x.tolist(), lam=sol.lam,
                     active_set=[s.value for s in sol.active_set], cost=prob.cost(sol.x)))
    return EXIT_OK


def cmd_validate_theorem1(args) -> int:
    sc = load_scenario(args.scenario)
    aru = sc.arus[0]
    curve = DeliveryCurve.default(args.service) if args.service else sc.curve
    a = np.array([p.cost.a for p in aru.assets])
    b = np.array([p.cost.b for p in aru.assets])
    c = np.array([p.cost.c for p in aru.assets])
    lo = np.array([p.lo for p in aru.assets])
    hi = np.array([p.hi for p in aru.assets])
    devs = np.linspace(args.start, args.stop, args.points)
    rep = validate_theorem1(a, b, lo, hi, devs, curve, aru.c_agg, c=c)
    print(f"compared {rep.compared} points, excluded {len(rep.excluded)}, "
          f"max relative error {rep.max_rel_error:.3e}")
    ok = rep.max_rel_error <= args.tolerance
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_OTHER


def cmd_list(args) -> int:
    for name in list_scenarios():
        print(name)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fvo", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def scenario_opts(p, horizon=True):
        p.add_argument("scenario", help="shipped scenario name or path to a YAML file")
        p.add_argument("--out", type=Path, help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--dt", type=float, metavar="MS", help="control interval in ms")
        p.add_argument("--algorithm", choices=("tot1", "tot2", "benchmark"),
                       help="override the algorithm of every ARU")
        if horizon:
            p.add_argument("--horizon", type=float, metavar="S")

    p = sub.add_parser("run", help="simulate a scenario")
    scenario_opts(p)
    p.add_argument("--no-trace", action="store_true", help="skip trace.csv")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="compare mismatch across variants or ARUs")
    scenario_opts(p)
    p.add_argument("--window-start", type=float, default=1.0,
                   help="window start when comparing ARUs of one run [s]")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("bench", help="controller time per interval against asset count")
    p.add_argument("scenario", nargs="?", help="scenario with a bench section")
    p.add_argument("--out", type=Path)
    p.add_argument("--seed", type=int)
    p.add_argument("--sizes", type=_ints)
    p.add_argument("--modes", type=lambda s: s.split(","))
    p.add_argument("--algorithm", choices=("tot1", "tot2", "benchmark"))
    p.add_argument("--steps", type=int)
    p.add_argument("--repeats", type=int)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("solve-instant", help="solve one allocation problem")
    p.add_argument("problem", nargs="?", type=Path,
                   help="YAML/JSON mapping with a, b, lo, hi, required[, c, deviation]; "
                        "options below override its fields")
    p.add_argument("--a", type=_floats)
    p.add_argument("--b", type=_floats)
    p.add_argument("--lo", type=_floats)
    p.add_argument("--hi", type=_floats)
    p.add_argument("--required", type=float)
    p.add_argument("--c", type=_floats)
    p.add_argument("--deviation", type=float)
    p.set_defaults(func=cmd_solve_instant)

    p = sub.add_parser("validate-theorem1",
                       help="check analytic trajectory rates against finite differences")
    p.add_argument("--scenario", default="ieee14_dm_noise")
    p.add_argument("--service", choices=("DC", "DM", "DR"))
    p.add_argument("--start", type=float, default=-0.2)
    p.add_argument("--stop", type=float, default=-0.1)
    p.add_argument("--points", type=int, default=51)
    p.add_argument("--tolerance", type=float, default=1e-6)
    p.set_defaults(func=cmd_validate_theorem1)

    p = sub.add_parser("list-scenarios", help="list shipped scenarios")
    p.set_defaults(func=cmd_list)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except RunAborted as exc:
        log.error("%s", exc)
        return EXIT_INFEASIBLE if exc.category == "infeasible" else EXIT_DIVERGED
    except InfeasibleProblem as exc:
        log.error("infeasible: %s", exc)
        return EXIT_INFEASIBLE
    except VALIDATION_ERRORS as exc:
        log.error("invalid input: %s", exc)
        return EXIT_INVALID
    except yaml.YAMLError as exc:
        log.error("invalid input: %s", exc)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001
        log.exception("unexpected error: %s", exc)
        return EXIT_OTHER


if __name__ == "__main__":
    sys.exit(main())
