"""Command-line driver: ``restart-bandits {run,verify,index,eval}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .arm import load_arm, structured_arm
from .errors import StateSpaceTooLarge
from .experiments import ExperimentConfig, load_config, run_experiment, table_names
from .policy_eval import dn_values
from .verify import SUITES, verify, write_report
from .whittle import whittle_table, write_index_json


def _add_arm_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("arm (either --arm or a structured family)")
    g.add_argument("--arm", help="arm JSON file (as written by save_arm)")
    g.add_argument("--family", type=int, default=1, choices=[1, 2, 3, 4])
    g.add_argument("--p", type=float, default=0.5, help="stay probability of the family")
    g.add_argument("--size", type=int, default=4, help="number of machine states |X|")
    g.add_argument("--q-seed", type=int, default=0, help="seed of the sampled reset pmf")
    p.add_argument("--model", choices=["A", "B"], default="A")
    p.add_argument("--beta", type=float, default=0.99)
    p.add_argument("--ell", type=int, default=3)
    p.add_argument("--out", help="output file (.csv or .json); stdout when omitted")


def _arm(args):
    if args.arm:
        return load_arm(args.arm)
    return structured_arm(args.family, args.p, args.size, args.q_seed)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="restart-bandits", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment grid and write its tables")
    run.add_argument("experiment", nargs="?", default="exp1", choices=["exp1", "exp2", "custom"])
    run.add_argument("--config", help="YAML file overriding the preset defaults")
    run.add_argument("--seed", type=int)
    run.add_argument("--out")
    run.add_argument("--paths", type=int)
    run.add_argument("--horizon", type=int)
    run.add_argument("--threads", type=int)

    ver = sub.add_parser("verify", help="run the property suites")
    ver.add_argument("--suite", action="append", choices=list(SUITES),
                     help="suite to run (repeatable; default: all)")
    ver.add_argument("--none", action="store_true", help="select no suites (empty report)")
    ver.add_argument("--corpus-size", type=int, default=8)
    ver.add_argument("--seed", type=int, default=0)
    ver.add_argument("--inject-fault", action="store_true",
                     help="replace every corpus cost with one violating the assumptions")
    ver.add_argument("--out", help="write the JSON report here (stdout when omitted)")

    idx = sub.add_parser("index", help="Whittle index table of one arm")
    _add_arm_args(idx)

    ev = sub.add_parser("eval", help="D/N tables of a threshold policy")
    _add_arm_args(ev)
    ev.add_argument("--theta", required=True,
                    help="threshold (model A) or comma-separated thresholds per state (model B)")
    return parser


def cmd_run(args) -> int:
    overrides = dict(seed=args.seed, out=args.out, paths=args.paths, horizon=args.horizon,
                     threads=args.threads)
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if args.config:
        cfg = load_config(args.config, args.experiment, **overrides)
    else:
        cfg = ExperimentConfig.preset(args.experiment, **overrides)
    prov = run_experiment(cfg)
    for name in table_names(cfg):
        for f in prov["files"]:
            if f.startswith(name + "_"):
                print(f"# {f}")
                print((Path(cfg.out) / f).read_text(), end="")
    print(f"# outputs in {cfg.out}")
    return 0


def cmd_verify(args) -> int:
    suites = [] if args.none else args.suite
    report = verify(suites, corpus_size=args.corpus_size, seed=args.seed,
                    inject_fault=args.inject_fault)
    if args.out:
        write_report(report, args.out)
    else:
        print(json.dumps(report, indent=2, sort_keys=True))
    for name, s in report["suites"].items():
        print(f"{name}: {'PASS' if s['passed'] else 'FAIL'} ({s['checked']} checks, "
              f"{s['n_failures']} failures)", file=sys.stderr)
    return 0 if report["passed"] else 1


def cmd_index(args) -> int:
    table = whittle_table(_arm(args), args.model, args.beta, args.ell)
    if args.out and args.out.endswith(".json"):
        write_index_json(table, args.out)
    elif args.out:
        table.to_csv(args.out)
    else:
        print(json.dumps(table.to_dict(), indent=2))
    return 0


def cmd_eval(args) -> int:
    arm = _arm(args)
    if args.model == "A":
        theta = int(args.theta)
    else:
        theta = [int(t) for t in args.theta.split(",")]
        if len(theta) == 1:
            theta = theta * arm.size
    value = dn_values(arm, args.model, theta, args.beta, args.ell)
    if args.out:
        value.to_csv(args.out)
    else:
        print("s,k,D,N")
        for s, k, d, n in value.rows():
            print(f"{s},{k},{float(d)!r},{float(n)!r}")
    return 0


COMMANDS = {"run": cmd_run, "verify": cmd_verify, "index": cmd_index, "eval": cmd_eval}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ValueError, StateSpaceTooLarge, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
