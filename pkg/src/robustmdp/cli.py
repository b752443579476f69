"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 verification failure, 3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import _kernels as K
from . import io as rio
from .errors import RobustMDPError
from .instances import build_counterexample, build_example1, build_garnet, build_graded_gap
from .mdp import Policy
from .mirror import MirrorMap
from .robust_eval import evaluate_robust
from .rtd import RTDConfig, rtd_evaluate
from .solvers import (
    SolverConfig,
    StepsizeSchedule,
    pessimistic_constants,
    reference_optimum,
    rpi_solve,
    rpmd_solve,
    rvi_log,
    srpmd_solve,
)
from .verify import SUITES, format_table, run_suite

EXIT_OK, EXIT_USAGE, EXIT_VERIFY, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


def _add_instance_args(p):
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--instance", help="instance JSON file")
    g.add_argument("--gen", help="generator spec, e.g. garnet:5,3,5 or example1:100,0.01,0.99")
    p.add_argument("--ambiguity", default="contamination:0.2",
                   help="ambiguity for generated garnets: kind[:param] (default contamination:0.2)")
    p.add_argument("--seed", type=int, default=0, help="generator / solver seed")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="robustmdp", description="Tabular robust MDP planning and learning toolkit.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("solve", help="run a solver and write PREFIX.csv / PREFIX.json")
    _add_instance_args(p)
    p.add_argument("--algo", choices=("rpmd", "srpmd", "rpi", "rvi"), default="rpmd")
    p.add_argument("--map", choices=("kl", "euclidean"), default="kl")
    p.add_argument("--schedule", default="auto", help="constant:ETA | geometric:ETA0,RATIO | auto")
    p.add_argument("--rho", default="uniform", help="'uniform' or a JSON file with a weight vector")
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--gap-tol", type=float, default=0.0)
    p.add_argument("--noise", type=float, default=None, help="SRPMD synthetic noise level")
    p.add_argument("--rtd-steps", type=int, default=None, help="SRPMD with robust TD estimates")
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--out", default="run", help="output prefix")

    p = sub.add_parser("evaluate", help="robust V, Q and worst-case kernel of a policy")
    _add_instance_args(p)
    p.add_argument("--policy", default="uniform", help="'uniform' or a JSON policy table")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--out", default=None, help="JSON output file (default: stdout)")

    p = sub.add_parser("rtd", help="robust TD evaluation; writes the error trace and theta")
    _add_instance_args(p)
    p.add_argument("--policy", default="uniform")
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--steps", type=int, default=100_000)
    p.add_argument("--mode", choices=("known_u", "contamination"), default="known_u")
    p.add_argument("--start", type=int, default=0)
    p.add_argument("--trace-every", type=int, default=1000)
    p.add_argument("--out", default="rtd", help="output prefix")

    p = sub.add_parser("verify", help="run the inequality and example checks")
    p.add_argument("--suite", choices=SUITES, default="all")
    p.add_argument("--C", type=float, default=2.0)
    p.add_argument("--gamma", type=float, default=0.5)
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("gen", help="write an instance bundle")
    p.add_argument("--gen", required=True)
    p.add_argument("--ambiguity", default="contamination:0.2")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("constants", help="print mismatch constants")
    _add_instance_args(p)
    p.add_argument("--rho", default="uniform")
    p.add_argument("--estimate", action="store_true", help="estimate from below using the robust optimum")
    return parser


# -- helpers ---------------------------------------------------------------------


def _floats(text: str, n_min: int, n_max: int, what: str):
    try:
        vals = [float(x) for x in text.split(",")] if text else []
    except ValueError as exc:
        raise UsageError(f"bad {what} parameters {text!r}") from exc
    if not n_min <= len(vals) <= n_max:
        raise UsageError(f"{what} expects {n_min}-{n_max} comma-separated values")
    return vals


def make_bundle(gen: str, ambiguity: str = "contamination:0.2", seed: int = 0):
    name, _, args = gen.partition(":")
    if name == "garnet":
        vals = _floats(args, 3, 4, "garnet")
        kind, _, param = ambiguity.partition(":")
        param = float(param) if param else 0.0
        gamma = vals[3] if len(vals) == 4 else 0.9
        return build_garnet(int(vals[0]), int(vals[1]), int(vals[2]), gamma, kind, param, seed)
    if name == "example1":
        vals = _floats(args, 3, 4, "example1")
        return build_example1(int(vals[0]), *vals[1:]).nominal
    if name == "counterexample":
        vals = _floats(args, 2, 2, "counterexample")
        return build_counterexample(*vals).bundle
    if name == "graded_gap":
        vals = _floats(args, 0, 1, "graded_gap")
        return build_graded_gap(int(vals[0])) if vals else build_graded_gap()
    raise UsageError(f"unknown generator {name!r}")


def _bundle(args):
    if getattr(args, "instance", None):
        return rio.load_bundle(args.instance)
    return make_bundle(args.gen, args.ambiguity, args.seed)


def _rho(text: str, n: int) -> np.ndarray:
    if text == "uniform":
        return np.full(n, 1.0 / n)
    rho = rio.load_vector(text)
    if rho.shape != (n,):
        raise UsageError(f"rho file has shape {rho.shape}, expected ({n},)")
    return rho


def _policy(text: str, n_s: int, n_a: int) -> np.ndarray:
    if text == "uniform":
        return Policy.uniform(n_s, n_a).probs
    return Policy(rio.load_vector(text)).probs


def parse_schedule(text: str, mdp=None, spec=None, rho=None) -> StepsizeSchedule:
    if text == "auto":
        c = pessimistic_constants(mdp, spec, rho)
        print(f"auto schedule: M={c.M!r} M'={c.M_prime!r} ratio={c.ratio!r}", file=sys.stderr)
        return StepsizeSchedule.geometric(1.0, c.ratio)
    kind, _, args = text.partition(":")
    if kind == "constant":
        return StepsizeSchedule.constant(_floats(args, 1, 1, "constant schedule")[0])
    if kind == "geometric":
        return StepsizeSchedule.geometric(*_floats(args, 2, 3, "geometric schedule"))
    raise UsageError(f"unknown schedule {text!r}")


# -- commands --------------------------------------------------------------------


def cmd_solve(args) -> int:
    b = _bundle(args)
    mdp, spec = b.mdp, b.spec
    rho = _rho(args.rho, mdp.n_states)
    sched = parse_schedule(args.schedule, mdp, spec, rho)
    rtd = RTDConfig(alpha=args.alpha, steps=args.rtd_steps, seed=args.seed, trace_every=0) \
        if args.rtd_steps else None
    noise = args.noise
    if args.algo == "srpmd" and noise is None and rtd is None:
        raise UsageError("srpmd needs --noise E or --rtd-steps T")
    cfg = SolverConfig(schedule=sched, map=MirrorMap.parse(args.map), rho=rho, max_iters=args.iters,
                       gap_tol=args.gap_tol, seed=args.seed, noise=noise, rtd=rtd)
    if args.algo == "rvi":
        log = rvi_log(mdp, spec, cfg)
    else:
        ref = reference_optimum(mdp, spec, rho, cfg.eval_tol)
        solver = {"rpmd": rpmd_solve, "srpmd": srpmd_solve, "rpi": rpi_solve}[args.algo]
        log = solver(mdp, spec, cfg, reference=ref)
    log.meta["instance"] = b.name
    csv_path, json_path = rio.write_runlog(log, args.out)
    print(f"wrote {csv_path} and {json_path} ({len(log.records)} records, stop: {log.stop_reason})")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    b = _bundle(args)
    pi = _policy(args.policy, b.mdp.n_states, b.mdp.n_actions)
    ev = evaluate_robust(b.mdp, b.spec, pi, tol=args.tol)
    text = rio.dumps(ev.to_dict())
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_rtd(args) -> int:
    b = _bundle(args)
    pi = _policy(args.policy, b.mdp.n_states, b.mdp.n_actions)
    cfg = RTDConfig(alpha=args.alpha, steps=args.steps, seed=args.seed, start_state=args.start,
                    operator_mode=args.mode, trace_every=args.trace_every)
    res = rtd_evaluate(b.mdp, b.spec, pi, cfg)
    prefix = str(args.out)
    Path(prefix + ".csv").write_text(rio.trace_csv(res.trace_steps, res.trace))
    Path(prefix + ".json").write_text(rio.dumps({"theta": res.theta, "steps": args.steps,
                                                 "alpha": args.alpha, "seed": args.seed}))
    final = f", final error {res.trace[-1]:.4g}" if res.trace.size else ""
    print(f"wrote {prefix}.csv and {prefix}.json{final}")
    return EXIT_OK


def cmd_verify(args) -> int:
    rows = run_suite(args.suite, C=args.C, gamma=args.gamma, trials=args.trials, seed=args.seed)
    print(format_table(rows))
    return EXIT_OK if all(r.passed for r in rows) else EXIT_VERIFY


def cmd_gen(args) -> int:
    b = make_bundle(args.gen, args.ambiguity, args.seed)
    rio.save_bundle(b, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_constants(args) -> int:
    b = _bundle(args)
    rho = _rho(args.rho, b.mdp.n_states)
    pi_star = reference_optimum(b.mdp, b.spec, rho).pi_star if args.estimate else None
    c = pessimistic_constants(b.mdp, b.spec, rho, pi_star)
    print(json.dumps({"M": c.M, "M_prime": c.M_prime, "ratio": c.ratio,
                      "kind": "sampled estimate" if c.estimate else "pessimistic bound"}))
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "evaluate": cmd_evaluate, "rtd": cmd_rtd,
            "verify": cmd_verify, "gen": cmd_gen, "constants": cmd_constants}


def run(argv=None) -> int:
    """Execute one command; returns the process exit code."""
    argv = sys.argv[1:] if argv is None else list(argv)
    threads = os.environ.get("ROBUSTMDP_THREADS")
    if threads:
        try:
            K.set_num_threads(int(threads))
        except ValueError:
            print("ignoring non-integer ROBUSTMDP_THREADS", file=sys.stderr)
    parser = build_parser()
    try:
        if not argv:
            raise UsageError(parser.format_help())
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_help())
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except (RobustMDPError, OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
