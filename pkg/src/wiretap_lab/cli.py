"""wiretap-lab command line.

  wiretap-lab capacity --config scn.json [--rf 0.2] [--q 0.1]
  wiretap-lab sweep --axis rf --config exp.json --out rf.csv
  wiretap-lab simulate --config exp.json --sessions 500 --seed 7 --out runs/
  wiretap-lab verify [--trials 20] [--seed 0]

Exit codes: 0 success, 1 validation error, 2 verification failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Optional

from .capacity import OBJECTIVES, bsc_nostate_capacity, bsc_state_capacity, optimize
from .errors import (
    BudgetExceeded,
    InfeasibleSpec,
    NotDegraded,
    StructuralAssumptionViolated,
    TooLargeForExact,
    ValidationError,
)
from .harness import ExperimentConfig, simulate, sweep, verify_consistency, write_csv

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_VERIFY = 2

_USER_ERRORS = (ValidationError, NotDegraded, StructuralAssumptionViolated, InfeasibleSpec,
                TooLargeForExact, BudgetExceeded, FileNotFoundError)


def _load(path: Optional[str]) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: {exc}") from None
    # a bare scenario file is accepted as well as a full experiment config
    if "scenario" not in doc and ({"p_y", "q", "main"} & set(doc)):
        doc = {"scenario": doc}
    return ExperimentConfig.from_json(doc)


def _cmd_capacity(args) -> int:
    cfg = _load(args.config)
    rf = cfg.rf if args.rf is None else args.rf
    sys_, scn = cfg.system(args.q)
    out = {"feedback_rate": rf, "scenario": scn.to_json() if scn else cfg.scenario}
    if scn is not None:
        out["c_ns"] = bsc_nostate_capacity(scn, rf)
        out["c_s"] = bsc_state_capacity(scn, rf)
    for name in OBJECTIVES:
        try:
            out[name] = optimize(sys_, rf, name, cfg.resolution).to_json()
        except NotDegraded as exc:
            out[name] = {"skipped": str(exc)}
    print(json.dumps(out, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = _load(args.config).with_overrides(axis=args.axis, rf=args.rf, seed=args.seed)
    rows = sweep(cfg)
    write_csv(rows, args.out, cfg)
    print(f"wrote {len(rows)} rows to {args.out}")
    return EXIT_OK


def _cmd_simulate(args) -> int:
    cfg = _load(args.config).with_overrides(axis=args.axis, sessions=args.sessions, seed=args.seed)
    if args.points is not None:
        key = "rf_grid" if cfg.axis == "rf" else "q_grid"
        cfg = cfg.with_overrides(**{key: [float(v) for v in args.points.split(",")]})
    rows = simulate(cfg, out_dir=args.out)
    for r in rows:
        print(f"{r.axis}={r.value:g} rate={r.attempted_rate:.4f} p_e={r.p_e:.4f} "
              f"d_hat={r.d_hat:.4f} verdict={r.verdict}")
    return EXIT_OK


def _cmd_verify(args) -> int:
    cfg = _load(args.config)
    rep = verify_consistency(cfg, trials=args.trials, seed=args.seed)
    for c in rep.checks:
        status = "skip" if c.skipped else ("pass" if c.passed else "FAIL")
        print(f"[{status}] {c.name}: {c.detail}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rep.to_json(), fh, indent=2)
    return EXIT_OK if rep.passed else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wiretap-lab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("capacity", help="bounds and closed forms for one scenario")
    c.add_argument("--config")
    c.add_argument("--rf", type=float)
    c.add_argument("--q", type=float)
    c.set_defaults(fn=_cmd_capacity)

    s = sub.add_parser("sweep", help="bound curves over R_f or q, written as CSV")
    s.add_argument("--axis", choices=("rf", "q"), required=True)
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.add_argument("--rf", type=float, help="fixed feedback rate for a q sweep")
    s.add_argument("--seed", type=int)
    s.set_defaults(fn=_cmd_sweep)

    m = sub.add_parser("simulate", help="run coded sessions at each sweep point")
    m.add_argument("--config")
    m.add_argument("--sessions", type=int)
    m.add_argument("--seed", type=int)
    m.add_argument("--out", required=True)
    m.add_argument("--axis", choices=("rf", "q"))
    m.add_argument("--points", help="comma-separated sweep values replacing the grid")
    m.set_defaults(fn=_cmd_simulate)

    v = sub.add_parser("verify", help="run all consistency checks")
    v.add_argument("--config")
    v.add_argument("--trials", type=int, default=20)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--json", help="also write the report here")
    v.set_defaults(fn=_cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "seed", None) is not None and args.seed < 0:
        print("error: seed must be non-negative", file=sys.stderr)
        return EXIT_INVALID
    try:
        return args.fn(args)
    except _USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
