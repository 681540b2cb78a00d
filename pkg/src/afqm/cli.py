"""Command-line front end: ``afqm {train,eval,sweep,fit,oracle-check}``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    RESULT_SCHEMA_VERSION, evaluate_point, fit_power_law, read_results, reference_csv, results_csv,
    retrain_source, sweep,
)
from .oracle import MAX_QUBITS, check_random_cases
from .optimizer import DEParams, OptimizerConfig, PSOParams, train
from .policy import DEFAULT_TERMS, PolicyFormatError, StateKind, dumps, load
from .trialsim import NoiseConfig

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_SENTINEL = 4

ORACLE_DEFAULT_MAX = 8

log = logging.getLogger("afqm")


class UsageError(Exception):
    pass


class InputFileError(Exception):
    pass


def parse_n_grid(text: str) -> list[int]:
    """``8,16,32``, ``8:64:8`` (linear step) or ``8:256:log8`` (8 log-spaced points)."""
    try:
        if ":" not in text:
            ns = [int(v) for v in text.split(",") if v.strip()]
        else:
            parts = text.split(":")
            if len(parts) != 3:
                raise ValueError
            lo, hi, step = int(parts[0]), int(parts[1]), parts[2]
            if step.startswith("log"):
                count = int(step[3:])
                if count < 2 or lo < 1 or hi <= lo:
                    raise ValueError
                ns = sorted({int(round(v)) for v in np.geomspace(lo, hi, count)})
            else:
                ns = list(range(lo, hi + 1, int(step)))
    except ValueError:
        raise UsageError(f"bad N grid {text!r}") from None
    if not ns or ns[0] < 1 or any(b <= a for a, b in zip(ns, ns[1:])):
        raise UsageError(f"N grid {text!r} must be positive and strictly ascending")
    return ns


def _noise(args) -> NoiseConfig:
    try:
        return NoiseConfig(args.loss_eta, args.phase_sigma, args.common_noise, args.index_by_position)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _load_policy(path: str):
    try:
        return load(path)
    except FileNotFoundError:
        raise InputFileError(f"{path}: no such policy file") from None
    except PolicyFormatError as exc:
        raise InputFileError(f"{path}: {exc}") from None
    except (OSError, UnicodeDecodeError) as exc:
        raise InputFileError(f"{path}: {exc}") from None


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _write_manifest(args, outputs: dict, started: float, extra: dict | None = None) -> None:
    target = outputs.get("primary")
    if not target or target == "-":
        return
    manifest = {
        "command": args.command,
        "argv": sys.argv[1:],
        "config": {k: v for k, v in sorted(vars(args).items()) if k != "func"},
        "seed": getattr(args, "seed", None),
        "code_version": __version__,
        "csv_schema_version": RESULT_SCHEMA_VERSION,
        "started": datetime.fromtimestamp(started, timezone.utc).isoformat(),
        "finished": datetime.now(timezone.utc).isoformat(),
        "wall_time": time.time() - started,
        "outputs": outputs,
    }
    manifest.update(extra or {})
    Path(str(target) + ".manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")


# -- commands -----------------------------------------------------------------

def cmd_train(args) -> int:
    kind = StateKind(args.state)
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    if kind is StateKind.SSS and args.n < 2:
        raise UsageError("--state sss needs --n >= 2")
    if args.ns < 1:
        raise UsageError("--ns must be >= 1")
    if args.agents is not None and args.agents < 4:
        raise UsageError("--agents must be >= 4")
    if args.iters < 1:
        raise UsageError("--iters must be >= 1")
    if args.trials is not None and args.trials < 1:
        raise UsageError("--trials must be >= 1")
    cfg = OptimizerConfig(
        algo=args.algo, agents=args.agents, iterations=args.iters, seed=args.seed,
        trials_per_eval=args.trials, n_terms=args.ns, noise=_noise(args),
        common_random_numbers=not args.no_crn, pso=PSOParams(), de=DEParams(),
    )
    started = time.time()
    run = train(kind, args.n, cfg, progress=True)
    _write(args.out, dumps(run.policy))
    trace_path = args.trace or (None if args.out in (None, "-") else str(args.out) + ".trace.csv")
    if trace_path:
        Path(trace_path).write_text("iteration,best_cost\n" + "".join(
            f"{i},{c!r}\n" for i, c in enumerate(run.trace)))
    _write_manifest(args, {"primary": args.out, "trace": trace_path}, started, {
        "training": {"heldout_cost": run.cost, "train_cost": run.train_cost,
                     "heldout_trials": run.heldout_trials, "heldout_seed": run.heldout_seed,
                     "optimizer": run.config, "optimizer_wall_time": run.wall_time},
    })
    log.info("held-out V=%.6g (train V=%.6g) in %.1fs", run.cost, run.train_cost, run.wall_time)
    return EXIT_SENTINEL if math.isinf(run.cost) else EXIT_OK


def cmd_eval(args) -> int:
    noise = _noise(args)
    policy = _load_policy(args.policy)
    n = args.n if args.n is not None else policy.n_trained
    if n is None:
        raise UsageError("policy has no trained N; pass --n")
    if n < 1 or (policy.state_kind is StateKind.SSS and n < 2):
        raise UsageError("N too small for this policy")
    if args.trials is not None and args.trials < 1:
        raise UsageError("--trials must be >= 1")
    started = time.time()
    point = evaluate_point(policy, n, noise, args.trials, args.seed)
    _write(args.out, results_csv([point]))
    _write_manifest(args, {"primary": args.out}, started)
    return EXIT_SENTINEL if point.cost.sentinel else EXIT_OK


def cmd_sweep(args) -> int:
    ns = parse_n_grid(args.n_grid)
    if (args.policy is None) == (args.retrain is None):
        raise UsageError("give exactly one of --policy or --retrain STATE")
    noise = _noise(args)
    if args.policy is not None:
        source = _load_policy(args.policy)
        if source.state_kind is StateKind.SSS and ns[0] < 2:
            raise UsageError("sss policies need N >= 2")
    else:
        kind = StateKind(args.retrain)
        if kind is StateKind.SSS and ns[0] < 2:
            raise UsageError("sss training needs N >= 2")
        source = retrain_source(kind, OptimizerConfig(algo=args.algo, iterations=args.iters, seed=args.seed,
                                                      n_terms=args.ns))
    started = time.time()
    points = sweep(source, ns, noise, args.trials, args.seed)
    _write(args.out, results_csv(points))
    ref_path = None
    if args.out not in (None, "-"):
        ref_path = str(Path(args.out).with_suffix("")) + ".reference.csv"
        Path(ref_path).write_text(reference_csv(ns))
    _write_manifest(args, {"primary": args.out, "reference": ref_path}, started)
    return EXIT_SENTINEL if any(p.cost.sentinel for p in points) else EXIT_OK


def cmd_fit(args) -> int:
    try:
        rows = read_results(args.input)
    except FileNotFoundError:
        raise InputFileError(f"{args.input}: no such file") from None
    except ValueError as exc:
        raise InputFileError(str(exc)) from None
    if len(rows) < 3:
        raise InputFileError(f"{args.input}: power-law fit needs at least 3 rows, got {len(rows)}")
    if any(not math.isfinite(r["dphi"]) for r in rows):
        log.error("sentinel (infinite) imprecision in %s", args.input)
        return EXIT_SENTINEL
    weights = None
    if args.weighted:
        weights = [(r["dphi"] / r["dphi_stderr"]) ** 2 for r in rows]
    try:
        fit = fit_power_law([(r["n"], r["dphi"]) for r in rows], weights)
    except ValueError as exc:
        raise InputFileError(f"{args.input}: {exc}") from None
    record = {"alpha": fit.alpha, "prefactor": fit.prefactor, "residual": fit.residual,
              "points": fit.points, "weighted": bool(args.weighted), "source": str(args.input)}
    _write(args.out, json.dumps(record, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_oracle_check(args) -> int:
    cap = MAX_QUBITS if args.allow_large else ORACLE_DEFAULT_MAX
    if not 1 <= args.n <= cap:
        raise UsageError(f"--n must be in [1, {cap}] (oracle cap)")
    if args.cases < 1:
        raise UsageError("--cases must be >= 1")
    reports = check_random_cases(range(min(2, args.n), args.n + 1), args.cases, args.seed)
    lines = ["case,n,state,eta,phase_sigma,outcomes_match,max_deviation,total_variation,status"]
    for i, r in enumerate(reports):
        lines.append(f"{i},{r.n},{r.state_kind},{r.noise.loss_eta!r},{r.noise.phase_sigma!r},"
                     f"{int(r.outcomes_match)},{r.max_deviation:.3e},{r.total_variation:.3e},"
                     f"{'pass' if r.passed(args.tol) else 'FAIL'}")
    ok = all(r.passed(args.tol) for r in reports)
    worst_dev = max(r.max_deviation for r in reports)
    worst_tv = max(r.total_variation for r in reports)
    lines.append(f"# {'PASS' if ok else 'FAIL'}: {len(reports)} cases, max deviation {worst_dev:.3e}, "
                 f"max total variation {worst_tv:.3e}, tolerance {args.tol:g}")
    _write(args.out, "\n".join(lines) + "\n")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


# -- parser -------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _noise_flags(p) -> None:
    p.add_argument("--loss-eta", type=float, default=0.0, help="per-qubit loss probability")
    p.add_argument("--phase-sigma", type=float, default=0.0, help="phase-fluctuation std dev (rad)")
    p.add_argument("--common-noise", action="store_true", help="one phase-noise draw per trial")
    p.add_argument("--index-by-position", action="store_true",
                   help="feedback index counts physical qubits, not detections")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="afqm", description=__doc__)
    parser.add_argument("--threads", type=int, default=None, help="worker cap (default: all cores)")
    parser.add_argument("-v", "--verbose", action="store_true", help="log iteration progress")
    parser.add_argument("--version", action="version", version=f"afqm {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train a policy")
    p.add_argument("--state", choices=[k.value for k in StateKind], required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--ns", type=int, default=DEFAULT_TERMS, help="number of policy coefficients")
    p.add_argument("--algo", choices=["pso", "de"], default="pso")
    p.add_argument("--iters", type=int, default=300)
    p.add_argument("--agents", type=int, default=None, help="default 20 * dim")
    p.add_argument("--trials", type=int, default=None, help="trials per evaluation, default 10 N^2")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-crn", action="store_true", help="independent trial seeds per agent")
    p.add_argument("--out", default=None, help="policy file (default stdout)")
    p.add_argument("--trace", default=None, help="trace CSV (default OUT.trace.csv)")
    _noise_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a policy")
    p.add_argument("--policy", required=True)
    p.add_argument("--n", type=int, default=None, help="default: the policy's trained N")
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="results CSV (default stdout)")
    _noise_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="evaluate over a grid of N")
    p.add_argument("--policy", default=None, help="fixed policy file")
    p.add_argument("--retrain", choices=[k.value for k in StateKind], default=None,
                   help="train a fresh policy at every N")
    p.add_argument("--n-grid", required=True, help="8,16,32 | 8:64:8 | 8:256:log8")
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--algo", choices=["pso", "de"], default="pso")
    p.add_argument("--iters", type=int, default=300)
    p.add_argument("--ns", type=int, default=DEFAULT_TERMS)
    p.add_argument("--out", default=None)
    _noise_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("fit", help="power-law fit of a results CSV")
    p.add_argument("input")
    p.add_argument("--weighted", action="store_true", help="weight by inverse log-variance")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("oracle-check", help="compare the simulator with the full-space oracle")
    p.add_argument("--n", type=int, default=ORACLE_DEFAULT_MAX, help="largest N checked")
    p.add_argument("--cases", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--allow-large", action="store_true", help=f"permit N up to {MAX_QUBITS}")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_oracle_check)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(asctime)s %(message)s", stream=sys.stderr)
        if args.threads is not None:
            if args.threads < 1:
                raise UsageError("--threads must be >= 1")
            import numba
            numba.set_num_threads(min(args.threads, numba.config.NUMBA_NUM_THREADS))
        return args.func(args)
    except UsageError as exc:
        print(f"afqm: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InputFileError as exc:
        print(f"afqm: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    raise SystemExit(main())
