"""Command-line client for the simulator.

Thin wrapper over the same pipeline the HTTP service exposes: parse
flags, load config + data, run the requested combinations, write report
files (simulate) or print one pass/fail line per invariant (verify).

Exit codes: 0 success, 1 config/data validation failure, 2 usage error,
3 invariant failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from .ingestion import IngestionError, SyntheticSpec, generate_synthetic, load_timeseries, write_timeseries
from .model import ConfigError, Method, Scheme, Strategy, config_from_json, config_to_json, parse_scheme, validate_config
from .reporting import (
    METHOD_ORDER,
    SCHEME_ORDER,
    STRATEGY_ORDER,
    OutcomePatch,
    combination_order,
    run_combinations,
    verify_scenario,
    write_reports,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_USAGE = 2
EXIT_INVARIANT = 3


def _data_error(errors: list[str]) -> int:
    print(json.dumps({"errors": errors}), file=sys.stderr)
    return EXIT_VALIDATION


def _load_inputs(args):
    try:
        config = config_from_json(Path(args.config).read_text())
    except FileNotFoundError:
        raise SystemExit(_data_error([f"config file not found: {args.config}"]))
    except ConfigError as exc:
        raise SystemExit(_data_error([str(exc)]))
    violations = validate_config(config)
    if violations:
        raise SystemExit(_data_error(violations))
    try:
        profiles = load_timeseries(args.data, config)
    except FileNotFoundError:
        raise SystemExit(_data_error([f"data file not found: {args.data}"]))
    except IngestionError as exc:
        raise SystemExit(_data_error(exc.errors))
    return profiles, config


def _combos(args, config, default_all: bool):
    # Flags default to the config's selection (simulate) or to the full
    # combination grid (verify); "both"/"all" always expand.
    explicit = any(v is not None for v in (args.strategy, args.scheme, args.method))
    expand_omitted = default_all and not explicit

    def pick(value, expand_token, full, single, parse):
        if value == expand_token:
            return full
        if value is None:
            return full if expand_omitted else (single,)
        return (parse(value),)

    strategies = pick(args.strategy, "both", STRATEGY_ORDER, config.strategy, Strategy)
    schemes = pick(args.scheme, "all", SCHEME_ORDER, config.scheme, parse_scheme)
    methods = pick(args.method, "both", METHOD_ORDER, config.method, Method)
    return combination_order(strategies, schemes, methods)


def _cmd_simulate(args) -> int:
    profiles, config = _load_inputs(args)
    combos = _combos(args, config, default_all=False)
    started = time.perf_counter()
    reports = run_combinations(profiles, config, combos)
    first = next(iter(profiles.values()))
    paths = write_reports(
        reports, args.out, config, len(first), time.perf_counter() - started
    )
    for r in reports:
        print(
            f"{r.strategy.value}/{r.scheme.value}/{r.method.value}: "
            f"imported {r.community.imported_kwh / 1000:.3f} MWh, "
            f"shared {r.community.shared_kwh / 1000:.3f} MWh, "
            f"exported {r.community.exported_kwh / 1000:.3f} MWh"
        )
    print(f"reports written to {Path(args.out).resolve()}")
    return EXIT_OK


def _cmd_verify(args) -> int:
    profiles, config = _load_inputs(args)
    combos = _combos(args, config, default_all=True)
    patch = None
    if args.corrupt:
        try:
            patch = OutcomePatch.from_json(Path(args.corrupt).read_text())
        except (OSError, ValueError, KeyError) as exc:
            return _data_error([f"bad corruption patch: {exc}"])
    checks = verify_scenario(profiles, config, combos, patch=patch)
    failed = 0
    for check in checks:
        status = "PASS" if check.passed else "FAIL"
        failed += not check.passed
        print(f"{status}  {check.name}: {check.detail}")
    print(f"{len(checks) - failed}/{len(checks)} invariants passed")
    return EXIT_OK if failed == 0 else EXIT_INVARIANT


def _cmd_synth(args) -> int:
    spec = SyntheticSpec(
        participants=args.participants,
        feeders=args.feeders,
        days=args.days,
        seed=args.seed,
        interval_minutes=args.interval_minutes,
        consumers_only=args.consumers_only,
    )
    try:
        profiles, config = generate_synthetic(spec)
    except ValueError as exc:
        return _data_error([str(exc)])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_timeseries(profiles, out / "data.csv")
    (out / "config.json").write_text(config_to_json(config) + "\n")
    print(f"wrote {out / 'data.csv'} and {out / 'config.json'}")
    return EXIT_OK


def _cmd_serve(args) -> int:
    from .service import serve

    serve(host=args.host, port=args.port)
    return EXIT_OK


def _add_selection_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--strategy", choices=["feeder-aware", "feeder-agnostic", "both"], default=None
    )
    parser.add_argument(
        "--scheme", choices=["equal", "proportional", "rank", "all"], default=None
    )
    parser.add_argument("--method", choices=["static", "dynamic", "both"], default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="feedershare",
        description="Energy-community surplus allocation simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run combinations and write report files")
    p_sim.add_argument("--config", required=True, help="community config JSON")
    p_sim.add_argument("--data", required=True, help="long-format CSV time series")
    _add_selection_flags(p_sim)
    p_sim.add_argument("--out", required=True, help="output directory for reports")
    p_sim.set_defaults(func=_cmd_simulate)

    p_ver = sub.add_parser("verify", help="run the invariant suite against a scenario")
    p_ver.add_argument("--config", required=True)
    p_ver.add_argument("--data", required=True)
    _add_selection_flags(p_ver)
    p_ver.add_argument(
        "--corrupt",
        default=None,
        help="debug fault injection: JSON patch {interval, participant, field, delta_kwh}",
    )
    p_ver.set_defaults(func=_cmd_verify)

    p_syn = sub.add_parser("synth", help="generate a deterministic synthetic scenario")
    p_syn.add_argument("--out", required=True)
    p_syn.add_argument("--participants", type=int, default=15)
    p_syn.add_argument("--feeders", type=int, default=4)
    p_syn.add_argument("--days", type=int, default=30)
    p_syn.add_argument("--seed", type=int, default=42)
    p_syn.add_argument("--interval-minutes", type=int, default=1)
    p_syn.add_argument("--consumers-only", action="store_true")
    p_syn.set_defaults(func=_cmd_synth)

    p_srv = sub.add_parser("serve", help="run the HTTP service")
    p_srv.add_argument("--host", default="127.0.0.1")
    p_srv.add_argument("--port", type=int, default=8000)
    p_srv.set_defaults(func=_cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
