"""Command-line entry point: ``fpbench <command> ...``."""

import argparse
import os
import sys
from pathlib import Path
from typing import Any, Optional

from . import __version__
from .config import (
    ExperimentConfig,
    ExponentBatch,
    LemmaConfig,
    OracleConfig,
    RateConfig,
    config_document,
    load_config,
)
from .errors import EXIT_INVARIANT, EXIT_OK, FpbenchError
from .keys import config_hash, keygen, save_key
from .logging import log_event
from .outputs import emit_outputs, write_json


def _out_dir(args: argparse.Namespace, default: str) -> Path:
    return Path(args.out) if args.out else Path(default)


def cmd_simulate(args: argparse.Namespace) -> int:
    from .harness import run_campaign

    cfg = load_config(args.config, ExperimentConfig)
    result = run_campaign(cfg, workers=args.workers)
    written = emit_outputs(result, _out_dir(args, cfg.output))
    for row in result.rows:
        rates = "  ".join(f"{e}={row.rate(e):.4g}" for e in ("fp", "miss_one", "miss_all"))
        print(f"N={row.N:<4} {row.attack:<32} {rates}")
    if result.partial:
        print("Warning: budget exhausted, results are partial", file=sys.stderr)
    print(f"Wrote {len(written)} files to {written[0].parent}")
    return EXIT_OK


def _exponent_task(task) -> dict[str, Any]:
    from .exponent_optimizer import (
        ExponentProblem,
        exponent_curve,
        exponent_suite,
        solve_exponent,
        watermark_exponent,
    )

    prob = ExponentProblem.from_json_dict(task.problem)
    out: dict[str, Any] = {"operation": task.operation, "problem": prob.to_json_dict()}
    if task.operation == "solve":
        out["result"] = solve_exponent(prob, oracle=task.oracle).to_json_dict()
    elif task.operation == "curve":
        out["rates"] = sorted(task.rates)
        out["result"] = [v.to_json_dict() for v in exponent_curve(prob, task.rates, oracle=task.oracle)]
    elif task.operation == "suite":
        out["result"] = exponent_suite(prob, task.delta, mesh=task.mesh).to_json_dict()
    else:
        out["result"] = watermark_exponent(prob, task.delta, mesh=task.mesh).to_json_dict()
    return out


def cmd_exponent(args: argparse.Namespace) -> int:
    batch = load_config(args.problems, ExponentBatch)
    results = []
    for i, task in enumerate(batch.tasks):
        res = _exponent_task(task)
        results.append(res)
        summary = res["result"]
        if isinstance(summary, list):
            text = ", ".join(str(v["value"]) for v in summary)
        elif "E_one" in summary:
            text = f"E_FP={summary['E_FP']} E_one={summary['E_one']} E_all={summary['E_all']}"
        else:
            text = f"{summary['value']} ({summary['status']})"
        print(f"[{i}] {task.operation}: {text}")
    path = write_json(
        {"version": __version__, "config_hash": config_hash(config_document(batch)), "tasks": results},
        _out_dir(args, batch.output) / "exponents.json",
    )
    print(f"Wrote {path}")
    return EXIT_OK


def cmd_rates(args: argparse.Namespace) -> int:
    from .rate_bounds import RATE_KINDS, private_capacity, rate_table, rate_threshold

    cfg = load_config(args.config, RateConfig)
    problem = cfg.build_problem()
    results: dict[str, Any] = {}
    values: dict[str, float] = {}
    for kind in cfg.kinds:
        if cfg.levels:
            table = rate_table(kind, problem, tuple(cfg.levels))
            results[kind] = table.to_json_dict()
            values[kind] = table.values[-1]
        else:
            res = rate_threshold(kind, problem)
            results[kind] = res.to_json_dict()
            values[kind] = res.value
        print(f"{kind:<10} {values[kind]:.6f} bits/symbol")
    if cfg.private_capacity:
        cap = private_capacity(problem)
        results["private-capacity"] = cap.to_json_dict()
        print(f"{'private':<10} {cap.value:.6f} bits/symbol")
    chain = [k for k in ("thr", "joint-one", "upper") if k in values]
    ordered = all(values[b] >= values[a] - 1e-4 for a, b in zip(chain, chain[1:]))
    if not ordered:
        log_event("rates", "warning", error="rate ordering thr <= joint-one <= upper violated", values=values)
        print("Warning: rate ordering thr <= joint-one <= upper does not hold", file=sys.stderr)
    path = write_json(
        {
            "version": __version__,
            "config_hash": config_hash(config_document(cfg)),
            "kinds": [k for k in RATE_KINDS if k in values],
            "ordering_holds": ordered,
            "results": results,
        },
        _out_dir(args, cfg.output) / "rates.json",
    )
    print(f"Wrote {path}")
    return EXIT_OK


def cmd_oracle(args: argparse.Namespace) -> int:
    from .harness import brute_force_oracle

    cfg = load_config(args.config, OracleConfig)
    result = brute_force_oracle(cfg, workers=args.workers)
    path = write_json(result.to_json_dict(), _out_dir(args, cfg.output) / "oracle.json")
    print(f"Coverage {result.coverage:.3f} over {len(result.cells)} cells")
    print(f"Wrote {path}")
    if not result.passed:
        print("Error: Monte Carlo estimates disagree with the exact enumeration", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


def cmd_check_lemmas(args: argparse.Namespace) -> int:
    from .lemmas import lemma_C1_checks

    cfg = load_config(args.config, LemmaConfig)
    report = lemma_C1_checks(cfg)
    for check in report.checks:
        status = "ok" if check.passed else "FAILED"
        print(f"{check.name:<32} {status:<7} checked={check.checked} max_excess={check.max_excess:.3g}")
    if args.out:
        print(f"Wrote {write_json(report.to_json_dict(), Path(args.out) / 'lemmas.json')}")
    if not report.passed:
        print("Error: lemma checks failed", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


def cmd_keygen(args: argparse.Namespace) -> int:
    key = keygen()
    if args.out:
        save_key(key, args.out)
        os.chmod(args.out, 0o600)
        print(f"Wrote key to {args.out}")
    else:
        print(key.hex())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fpbench",
        description="Blind collusion-fingerprinting simulation lab",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Monte Carlo campaign, 8 worker processes
  fpbench simulate configs/public_binary.json --workers 8

  # Exponent problems from a batch file
  fpbench exponent configs/exponents.json --out results/

  # Fresh secret key
  fpbench keygen --out secret.key
        """,
    )
    parser.add_argument("--version", action="version", version=f"fpbench {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="Run a Monte Carlo campaign")
    p.add_argument("config", help="Experiment config (JSON)")
    p.add_argument("--out", help="Output directory (default: config 'output')")
    p.add_argument("--workers", type=int, help="Worker processes (overrides FPBENCH_THREADS)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("exponent", help="Solve a batch of exponent problems")
    p.add_argument("problems", help="Exponent batch (JSON)")
    p.add_argument("--out", help="Output directory (default: batch 'output')")
    p.set_defaults(func=cmd_exponent)

    p = sub.add_parser("rates", help="Achievable-rate thresholds and the upper bound")
    p.add_argument("config", help="Rate config (JSON)")
    p.add_argument("--out", help="Output directory (default: config 'output')")
    p.set_defaults(func=cmd_rates)

    p = sub.add_parser("oracle", help="Exact event probabilities by output enumeration")
    p.add_argument("config", help="Oracle config (JSON)")
    p.add_argument("--out", help="Output directory (default: config 'output')")
    p.add_argument("--workers", type=int, help="Worker processes (overrides FPBENCH_THREADS)")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("check-lemmas", help="Finite-N type-counting checks")
    p.add_argument("config", help="Lemma config (JSON)")
    p.add_argument("--out", help="Directory for lemmas.json")
    p.set_defaults(func=cmd_check_lemmas)

    p = sub.add_parser("keygen", help="Generate a 256-bit secret key")
    p.add_argument("--out", help="Key file (default: print to stdout)")
    p.set_defaults(func=cmd_keygen)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    """CLI entry point; returns the process exit code."""
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FpbenchError as e:
        print(f"Error: {e}", file=sys.stderr)
        log_event(args.command, "error", error=str(e))
        return e.exit_code
    except OSError as e:
        print(f"Error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
