"""Command line entry point: ``planted-lab generate|detect|theory|oracle|sweep``.

Exit status is 0 on success, 2 for configuration errors and 3 when a
computational budget is exhausted.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from pathlib import Path

from .detectors import DEFAULT_DELTA, ScanPlan, Strategy, TestId, run_test
from .errors import (BranchInapplicableError, BudgetExceededError, ConfigurationError,
                     PlantedLabError)
from .harness import ExperimentConfig, Sweep, emit_report, run_sweep
from .model import (Hypothesis, Observation, Placement, PlacementConfig, TemplateFamily, generate,
                    read_matrix, write_matrix)
from .theory import bound_report, exact_second_moment, second_moment_upper_bound

EXIT_OK, EXIT_CONFIG, EXIT_BUDGET = 0, 2, 3


def _load_json(text_or_path: str) -> dict:
    """Accept inline JSON or a path to a JSON file."""
    text = text_or_path
    if not text.lstrip().startswith(("{", "[")):
        try:
            text = Path(text_or_path).read_text()
        except OSError as exc:
            raise ConfigurationError(f"cannot read {text_or_path}: {exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"invalid JSON in {text_or_path}: {exc}") from None


def _family(args) -> TemplateFamily:
    if args.family is None:
        raise ConfigurationError("--family is required")
    return TemplateFamily.from_json(_load_json(args.family))


def _emit(doc, out: str | None):
    text = json.dumps(doc)
    if out:
        Path(out).write_text(text + "\n")
    print(text)


def _generation_setup(doc: dict, args):
    """Placement config, family and hypothesis from a generation config document."""
    try:
        config = PlacementConfig.of(doc["n"], doc["k"], doc.get("m", 1), doc["placement"])
    except KeyError as exc:
        raise ConfigurationError(f"generation config lacks field {exc}") from None
    family = doc.get("family")
    family = TemplateFamily.from_json(family) if family is not None else None
    if family is None and getattr(args, "family", None):
        family = _family(args)
    hypothesis = Hypothesis(doc.get("hypothesis") or ("H1" if family is not None else "H0"))
    seed = args.seed if args.seed is not None else doc.get("seed", 0)
    return config, family, hypothesis, seed


# ---------------------------------------------------------------- subcommands

def cmd_generate(args) -> int:
    if args.config:
        doc = _load_json(args.config)
    else:
        doc = {"n": args.n, "k": args.k, "m": args.m, "placement": args.placement,
               "hypothesis": args.hypothesis}
        if None in (args.n, args.k):
            raise ConfigurationError("give --config or both --n and --k")
    config, family, hypothesis, seed = _generation_setup(doc, args)
    obs = generate(config, family, hypothesis, seed)
    summary = {"hypothesis": obs.hypothesis.value, "n": obs.n, "seed": seed,
               "instance": None if obs.instance is None else obs.instance.to_json()}
    if args.out:
        write_matrix(args.out, obs.data)
        summary["matrix"] = args.out
        if obs.instance is not None:
            instance_path = args.instance_out or f"{args.out}.instance.json"
            Path(instance_path).write_text(json.dumps(obs.instance.to_json()) + "\n")
            summary["instance_file"] = instance_path
    print(json.dumps(summary))
    return EXIT_OK


def cmd_detect(args) -> int:
    family = _family(args)
    path = Path(args.input)
    if path.suffix == ".json":
        config, gen_family, hypothesis, seed = _generation_setup(_load_json(args.input), args)
        obs = generate(config, gen_family or family, hypothesis, seed)
    else:
        try:
            obs = Observation(read_matrix(path), Hypothesis.H0)
        except OSError as exc:
            raise ConfigurationError(f"cannot read {path}: {exc}") from None
    strategy = args.strategy or ("brute" if Placement.parse(args.placement) is Placement.NONCON
                                 else "sliding")
    plan = ScanPlan(args.placement, Strategy(strategy), args.delta)
    start = time.perf_counter()
    decision = run_test(args.test, obs, family, plan)
    doc = decision.to_json()
    doc["wall_time_ms"] = (time.perf_counter() - start) * 1000.0
    _emit(doc, args.out)
    return EXIT_OK


def cmd_theory(args) -> int:
    family = _family(args)
    config = PlacementConfig.of(args.n, args.k, args.m, args.placement)
    _emit(bound_report(family, config, args.delta).to_json(), args.out)
    return EXIT_OK


def cmd_oracle(args) -> int:
    family = _family(args)
    config = PlacementConfig.of(args.n, args.k, args.m, args.placement)
    exact = exact_second_moment(config, family)
    try:
        bound, applicable = second_moment_upper_bound(config, family), True
    except BranchInapplicableError:
        bound, applicable = None, False
    _emit({"exact": exact, "bound": bound, "branch_applicable": applicable}, args.out)
    return EXIT_OK


def cmd_sweep(args) -> int:
    config = ExperimentConfig.from_json(_load_json(args.config))
    overrides = {}
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.trials is not None:
        overrides["trials"] = args.trials
    if args.param is not None:
        values = tuple(float(v) for v in args.values.split(",")) if args.values else ()
        overrides["sweep"] = Sweep(args.param, values)
    if overrides:
        config = dataclasses.replace(config, **overrides)
    points = run_sweep(config, threads=args.threads)
    fmt = args.format or ("json" if args.out and args.out.endswith(".json") else "csv")
    try:
        text = emit_report(points, args.out, fmt)
    except OSError as exc:
        raise ConfigurationError(f"cannot write report: {exc}") from None
    if not args.out:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _dims(p, required=True):
    p.add_argument("--n", type=int, required=required)
    p.add_argument("--k", type=int, required=required)
    p.add_argument("--m", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="planted-lab", description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=None, help="master seed")
    parser.add_argument("--threads", type=int, default=1, help="worker threads for trials")
    parser.add_argument("--out", default=None, help="output file")
    sub = parser.add_subparsers(dest="command", required=True)
    placements = [p.value for p in Placement]

    def common(p):
        # accepted after the subcommand too
        p.add_argument("--seed", type=int, default=argparse.SUPPRESS)
        p.add_argument("--threads", type=int, default=argparse.SUPPRESS)
        p.add_argument("--out", default=argparse.SUPPRESS)

    g = sub.add_parser("generate", help="draw an observation and write the binary matrix dump")
    common(g)
    g.add_argument("--config", help="generation config JSON (inline or path)")
    _dims(g, required=False)
    g.add_argument("--placement", choices=placements, default="con")
    g.add_argument("--family", help="template family JSON")
    g.add_argument("--hypothesis", choices=["H0", "H1"], default=None)
    g.add_argument("--instance-out", help="where to write the planted instance JSON")
    g.set_defaults(func=cmd_generate)

    d = sub.add_parser("detect", help="run one detection test")
    common(d)
    d.add_argument("--input", required=True, help="binary matrix dump or generation config (.json)")
    d.add_argument("--family", required=True)
    d.add_argument("--test", required=True, choices=[t.value for t in TestId])
    d.add_argument("--placement", choices=placements, default="con")
    d.add_argument("--strategy", choices=[s.value for s in Strategy], default=None)
    d.add_argument("--delta", type=float, default=DEFAULT_DELTA)
    d.set_defaults(func=cmd_detect)

    t = sub.add_parser("theory", help="evaluate bound conditions")
    common(t)
    t.add_argument("--family", required=True)
    t.add_argument("--placement", choices=placements, required=True)
    _dims(t)
    t.add_argument("--delta", type=float, default=0.1)
    t.set_defaults(func=cmd_theory)

    o = sub.add_parser("oracle", help="exact second moment on a tiny instance")
    common(o)
    o.add_argument("--family", required=True)
    o.add_argument("--placement", choices=placements, required=True)
    _dims(o)
    o.set_defaults(func=cmd_oracle)

    s = sub.add_parser("sweep", help="Monte Carlo risk sweep to CSV or JSON")
    common(s)
    s.add_argument("--config", required=True, help="experiment config JSON (inline or path)")
    s.add_argument("--param", help="override the sweep parameter")
    s.add_argument("--values", help="comma-separated grid for --param")
    s.add_argument("--trials", type=int)
    s.add_argument("--format", choices=["csv", "json"])
    s.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("planted-lab: error: --threads must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except BudgetExceededError as exc:
        print(f"planted-lab: budget exhausted: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (PlantedLabError, ValueError, KeyError, TypeError) as exc:
        print(f"planted-lab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
