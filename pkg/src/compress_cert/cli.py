"""compress-cert: bounds tables, property validation and Monte Carlo runs.

Exit codes: 0 success, 1 I/O failure, 2 usage or config error,
3 an expected failure was confirmed, 4 a check came out the other way
(a documented property was violated, or an expected failure did not show).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

from .bounds import bound_table, fmt
from .compression import CHECKS, SchemeConfigError
from .experiments import (
    ConfigError,
    Distribution,
    TrialResult,
    coverage_report,
    load_config,
    run_trials,
    trials_csv,
)
from .schemes import EXPECTED, SCHEME_NAMES, make_scheme

EXIT_OK, EXIT_IO, EXIT_USAGE, EXIT_EXPECTED_FAIL, EXIT_UNEXPECTED = 0, 1, 2, 3, 4
SEED_ENV = "COMPRESS_CERT_SEED"

log = logging.getLogger("compress_cert")

# law and sample size each scheme is validated under
VALIDATION_SETUP = {
    "hull2": (Distribution("uniform_cube", dim=2), 30, {}),
    "hull3": (Distribution("gaussian", dim=3), 50, {}),
    "svm": (Distribution("labeled_blobs", dim=2, spread=1.0), 30, {}),
    "svr": (Distribution("noisy_line", lo=-1.0, hi=1.0, noise=0.2), 30, {"t": 0.1}),
    "gem": (Distribution("labeled_blobs", dim=2, spread=1.0), 30, {"d": 10}),
    "second_largest": (Distribution("uniform_cube", dim=1), 20, {}),
    "trimming": (Distribution("point_mass", atom=0.0), 150, {"M": 100}),
    "closest_pair": (Distribution("uniform_cube", dim=1), 10, {}),
}


def _rounded(obj):
    if isinstance(obj, float):
        return obj if not math.isfinite(obj) else float(fmt(obj))
    if isinstance(obj, dict):
        return {k: _rounded(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_rounded(v) for v in obj]
    return obj


def _write(path: Path, text: str):
    path.write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8", newline="")


def _seed(args) -> int:
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise SystemExit(f"{SEED_ENV} must be an integer, got {env!r}")
    return args.seed


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="compress-cert", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    b = sub.add_parser("bounds", help="write eps / eps_low / eps_up tables")
    b.add_argument("--n", type=int, required=True)
    b.add_argument("--delta", type=float, action="append", required=True)
    b.add_argument("--out", type=Path, required=True)
    b.add_argument("--jobs", type=int, default=1)

    v = sub.add_parser("validate", help="sampling-based property checks")
    v.add_argument("--scheme", required=True)
    v.add_argument("--property", action="append", dest="properties")
    v.add_argument("--trials", type=int, default=1000)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--n", type=int, default=None, help="training sample size")
    v.add_argument("--batch", type=int, default=2, help="batch size p for non_assoc")
    v.add_argument("--out", type=Path)
    v.add_argument("--expect-fail", action="store_true")

    s = sub.add_parser("simulate", help="Monte Carlo coverage experiment")
    s.add_argument("--config", type=Path, required=True)
    s.add_argument("--out", type=Path, required=True)
    s.add_argument("--summary", type=Path)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--jobs", type=int, default=1)

    r = sub.add_parser("report", help="coverage summary of a trials CSV")
    r.add_argument("--trials", type=Path, required=True)
    r.add_argument("--delta", type=float, required=True)
    r.add_argument("--n", type=int, default=None)
    r.add_argument("--out", type=Path)
    for sp in (b, v, s, r):
        sp.set_defaults(parser=sp)
    return p


def cmd_bounds(args, parser) -> int:
    if args.n < 1:
        parser.error("--n must be at least 1")
    for d in args.delta:
        if not 0 < d < 1:
            parser.error(f"--delta must lie in (0, 1), got {d}")
    if args.jobs < 1:
        parser.error("--jobs must be at least 1")
    out = args.out
    for d in args.delta:
        table = bound_table(args.n, d, jobs=args.jobs)
        path = out.with_name(f"{out.stem}_delta{d:g}{out.suffix or '.csv'}")
        try:
            table.to_csv(path)
        except OSError as exc:
            print(f"cannot write {path}: {exc}", file=sys.stderr)
            return EXIT_IO
        log.info("wrote %s", path)
    return EXIT_OK


def cmd_validate(args, parser) -> int:
    if args.scheme not in SCHEME_NAMES:
        parser.error(f"unknown scheme {args.scheme!r}; expected one of {', '.join(SCHEME_NAMES)}")
    props = args.properties or sorted(CHECKS)
    for name in props:
        if name not in CHECKS:
            parser.error(f"unknown property {name!r}; expected one of {', '.join(sorted(CHECKS))}")
    if args.trials < 1:
        parser.error("--trials must be at least 1")
    dist, n, params = VALIDATION_SETUP[args.scheme]
    scheme = make_scheme(args.scheme, **params)
    source = dist.source(args.n or n)
    seed = _seed(args)
    reports = []
    for name in props:
        kwargs = {"p": args.batch} if name == "non_assoc" else {}
        try:
            rep = CHECKS[name](scheme, source, args.trials, seed=seed, **kwargs)
        except SchemeConfigError as exc:
            if args.properties:
                parser.error(str(exc))
            continue
        reports.append(rep)
    doc = json.dumps([_rounded(r.to_dict()) for r in reports], indent=2, sort_keys=True)
    print(doc)
    if args.out is not None:
        try:
            _write(args.out, doc)
        except OSError as exc:
            print(f"cannot write {args.out}: {exc}", file=sys.stderr)
            return EXIT_IO
    expected = EXPECTED[args.scheme]
    if args.expect_fail:
        confirmed = any(not r.passed for r in reports)
        return EXIT_EXPECTED_FAIL if confirmed else EXIT_UNEXPECTED
    broken = [r.property for r in reports if not r.passed and r.property in expected]
    if broken:
        print(f"documented properties violated: {', '.join(broken)}", file=sys.stderr)
        return EXIT_UNEXPECTED
    return EXIT_OK


def cmd_simulate(args, parser) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"cannot read {args.config}: {exc}", file=sys.stderr)
        return EXIT_IO
    if args.jobs < 1:
        parser.error("--jobs must be at least 1")
    seed = _seed(args)
    if seed is not None:
        cfg = type(cfg)(**{**cfg.__dict__, "seed": seed})
    results = run_trials(cfg, jobs=args.jobs)
    summary = coverage_report(results, cfg.delta, cfg.N) if results else {
        "trials": 0, "valid": 0, "failed": 0, "coverage": None,
        "delta": cfg.delta, "target": 1.0 - cfg.delta}
    summary["config"] = cfg.to_dict()
    summary_path = args.summary or args.out.with_name(f"{args.out.stem}_summary.json")
    try:
        _write(args.out, trials_csv(results))
        _write(summary_path, json.dumps(_rounded(summary), indent=2, sort_keys=True))
    except OSError as exc:
        print(f"cannot write output: {exc}", file=sys.stderr)
        return EXIT_IO
    print(json.dumps(_rounded({k: v for k, v in summary.items() if k != "config"}), sort_keys=True))
    return EXIT_OK


def read_trials(path: Path) -> list[TrialResult]:
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            failed = row["inside"] == "failed"
            out.append(TrialResult(int(row["trial"]), int(row["seed"]), int(row["k"]),
                                   float(row["risk_hat"]), float(row["phi_hat"]), float(row["eps"]),
                                   float(row["eps_low"]), float(row["eps_up"]),
                                   row["inside"] == "true", "failed" if failed else None))
    return out


def cmd_report(args, parser) -> int:
    if not 0 < args.delta < 1:
        parser.error("--delta must lie in (0, 1)")
    try:
        results = read_trials(args.trials)
    except OSError as exc:
        print(f"cannot read {args.trials}: {exc}", file=sys.stderr)
        return EXIT_IO
    except (KeyError, ValueError) as exc:
        print(f"malformed trials file {args.trials}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if not results:
        print("trials file has no rows", file=sys.stderr)
        return EXIT_USAGE
    doc = json.dumps(_rounded(coverage_report(results, args.delta, args.n)), indent=2, sort_keys=True)
    print(doc)
    if args.out is not None:
        try:
            _write(args.out, doc)
        except OSError as exc:
            print(f"cannot write {args.out}: {exc}", file=sys.stderr)
            return EXIT_IO
    return EXIT_OK


COMMANDS = {"bounds": cmd_bounds, "validate": cmd_validate, "simulate": cmd_simulate,
            "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args, args.parser)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
