"""Command line: generate, solve, sweep, check-grad, report.

Exit codes: 0 success, 1 validation error, 2 numerical failure,
3 partial sweep failure, 4 solver stopped at a stationary point.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import experiment as ex
from .exceptions import ContractViolation, GeometryDegenerate, SingularOperator
from .linalg import atomic_write_text
from .frank_wolfe import LMO_METHODS, STEP_RULES, SolverConfig
from .wings import DatasetConfig, WingConfig, default_test_angles, default_training_angles

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2
EXIT_PARTIAL = 3
EXIT_STATIONARY = 4

logger = logging.getLogger("opcorrect")


def parse_grid(text, log=False):
    """``a,b,c`` list, or ``start:stop:count`` (log-spaced over exponents when ``log``)."""
    if isinstance(text, (list, tuple)):
        return tuple(float(x) for x in text)
    text = str(text).strip()
    if text.count(":") == 2:
        start, stop, count = text.split(":")
        if log:
            return tuple(float(x) for x in np.logspace(float(start), float(stop), int(count)))
        return tuple(float(x) for x in np.linspace(float(start), float(stop), int(count)))
    return tuple(float(x) for x in text.split(",") if x.strip())


def _solver_flags(p):
    g = p.add_argument_group("solver")
    g.add_argument("--max-iterations", type=int)
    g.add_argument("--gap-tolerance", type=float)
    g.add_argument("--relative-gap-tolerance", type=float)
    g.add_argument("--step-rule", choices=STEP_RULES)
    g.add_argument("--lmo-method", choices=LMO_METHODS)
    g.add_argument("--lmo-tolerance", type=float)
    g.add_argument("--backtracking-shrink", type=float)
    g.add_argument("--backtracking-sufficient-decrease", type=float)


_SOLVER_KEYS = (
    "max_iterations",
    "gap_tolerance",
    "relative_gap_tolerance",
    "step_rule",
    "lmo_method",
    "lmo_tolerance",
    "backtracking_shrink",
    "backtracking_sufficient_decrease",
)


def merged(args, file_cfg, key, default=None):
    """Flag value if given, else config-file value, else ``default``."""
    val = getattr(args, key, None)
    if val is not None:
        return val
    return file_cfg.get(key, default)


def solver_config(args, file_cfg):
    section = dict(file_cfg.get("solver", {}))
    kw = {k: merged(args, section, k) for k in _SOLVER_KEYS}
    return SolverConfig(**{k: v for k, v in kw.items() if v is not None})


def load_config_file(path):
    if not path:
        return {}
    with open(path) as fh:
        return json.load(fh)


def build_parser():
    parser = argparse.ArgumentParser(prog="opcorrect", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="build the two-wing case study and write a manifest")
    p.add_argument("manifest")
    p.add_argument("--config", help="JSON file with wing_config/train/test sections")
    p.add_argument("--panels-per-wing", type=int)
    p.add_argument("--chord", type=float)
    p.add_argument("--thickness-ratio", type=float)
    p.add_argument("--second-wing-offset", type=float, nargs=2, metavar=("DX", "DY"))
    p.add_argument("--train-angles", help="degrees: list a,b,c or start:stop:count")
    p.add_argument("--test-angles", help="degrees: list a,b,c or start:stop:count")
    p.add_argument("--speed", type=float)
    p.add_argument("--noise-std", type=float)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("solve", help="solve one correction problem")
    p.add_argument("manifest")
    p.add_argument("--config")
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--delta", help="number, 'auto' (0.1 ||M||_*) or '<f>*nuclear'")
    p.add_argument("--out", required=True)
    _solver_flags(p)

    p = sub.add_parser("sweep", help="solve for a grid of lambda values")
    p.add_argument("manifest")
    p.add_argument("--config")
    p.add_argument("--lambda-values", help="list a,b,c or log10 start:stop:count")
    p.add_argument("--delta")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True, help="output CSV path")
    _solver_flags(p)

    p = sub.add_parser("check-grad", help="closed-form vs finite-difference gradient")
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--N", type=int, default=5)
    p.add_argument("--lambda", dest="lam", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--step", type=float, default=1e-6)
    p.add_argument("--tolerance", type=float, default=1e-5)

    p = sub.add_parser("report", help="plot-data files from a sweep CSV")
    p.add_argument("sweep_csv")
    p.add_argument("out_dir")
    return parser


def cmd_generate(args):
    cfg = load_config_file(args.config)
    wc = dict(cfg.get("wing_config", {}))
    for key in ("panels_per_wing", "chord", "thickness_ratio", "second_wing_offset"):
        val = getattr(args, key)
        if val is not None:
            wc[key] = val
    wing = WingConfig(**wc)
    train_cfg = dict(cfg.get("train", {}))
    test_cfg = dict(cfg.get("test", {}))
    for section in (train_cfg, test_cfg):
        for key in ("speed", "noise_std", "seed"):
            if getattr(args, key) is not None:
                section[key] = getattr(args, key)
    if args.train_angles:
        train_cfg["angles_deg"] = parse_grid(args.train_angles)
    if args.test_angles:
        test_cfg["angles_deg"] = parse_grid(args.test_angles)
    train_cfg.setdefault("angles_deg", tuple(default_training_angles()))
    test_cfg.setdefault("angles_deg", tuple(default_test_angles()))
    test_cfg.setdefault("seed", train_cfg.get("seed", 0) + 1)
    m = ex.generate(args.manifest, wing, DatasetConfig(**train_cfg), DatasetConfig(**test_cfg))
    print(f"wrote {args.manifest}: T {m.wing1_size * 2}x{m.wing1_size * 2}, M {m.wing1_size}x{m.wing1_size}")
    return EXIT_OK


def cmd_solve(args):
    cfg = load_config_file(args.config)
    manifest = ex.load_manifest(args.manifest)
    lam = merged(args, cfg, "lam", cfg.get("lambda", 0.0))
    delta = merged(args, cfg, "delta")
    result, metrics = ex.solve_manifest(manifest, float(lam), delta, solver_config(args, cfg))
    ex.write_solve_outputs(args.out, result, metrics)
    print(
        f"lambda={lam:g} termination={result.termination} iterations={result.iterations_run} "
        f"train={metrics['train_inverse_error']:.6e} test={metrics['test_inverse_error']:.6e}"
    )
    if result.termination == "stationary_zero_gradient":
        return EXIT_STATIONARY
    return EXIT_OK


def cmd_sweep(args):
    cfg = load_config_file(args.config)
    lams = args.lambda_values if args.lambda_values is not None else cfg.get("lambda_values")
    kw = {"delta": merged(args, cfg, "delta"), "solver": solver_config(args, cfg)}
    if lams is not None:
        kw["lambda_values"] = parse_grid(lams, log=True)
    sweep_cfg = ex.SweepConfig(**kw)
    rows, _ = ex.run_sweep(args.manifest, sweep_cfg, jobs=args.jobs)
    atomic_write_text(args.out, ex.rows_to_csv(rows))
    failed = [r for r in rows if r["status"] != "ok"]
    print(f"wrote {args.out}: {len(rows) - 1} lambda rows, {len(failed)} failed")
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_check_grad(args):
    err = ex.check_gradient(args.n, args.N, args.lam, args.seed, args.step)
    verdict = "PASS" if err <= args.tolerance else "FAIL"
    print(f"{verdict} max relative error {err:.3e} (n={args.n}, N={args.N}, lambda={args.lam:g}, seed={args.seed})")
    return EXIT_OK if verdict == "PASS" else EXIT_NUMERICAL


def cmd_report(args):
    rows = ex.read_sweep_csv(args.sweep_csv)
    for path in ex.write_report(rows, args.out_dir):
        print(path)
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "solve": cmd_solve,
    "sweep": cmd_sweep,
    "check-grad": cmd_check_grad,
    "report": cmd_report,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ContractViolation, GeometryDegenerate, FileNotFoundError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (SingularOperator, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
