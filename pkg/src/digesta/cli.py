"""Command-line entry point.

Exit codes: 0 success, 1 invalid input (parse, validation, unknown path,
unwritable output), 2 an integration failed at runtime.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from digesta import __version__
from digesta.config import RunConfig, parse_config
from digesta.errors import DigestaError, OutputError, ParseError, UnknownParameter, ValidationError
from digesta.integrator import integrate
from digesta.output import summary_csv, write_manifest, write_outputs
from digesta.scenarios import (
    ScenarioResult,
    Sweep,
    apply_overrides,
    baseline_scenario,
    builtin_scenarios,
    get_builtin,
    initial_state,
    run_scenario,
    sweep,
)

EXIT_OK, EXIT_INPUT, EXIT_RUNTIME = 0, 1, 2
_FAILED = ("failed", "dehydrated", "degenerate")


def _read_config(path: str) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc.strerror or exc}") from None
    return parse_config(text)


def _select(config: RunConfig, name: str | None):
    if name is None:
        return list(config.scenarios)
    for scenario in config.scenarios:
        if scenario.name == name:
            return [scenario]
    return [get_builtin(name)]


def _failures(result: ScenarioResult) -> list[str]:
    return [
        f"{result.name} [{row.value}]: {row.status}"
        for row in result.rows
        if row.status.startswith(_FAILED)
    ]


def _emit(results, config: RunConfig, config_path: str, out: str) -> int:
    failures = []
    for result in results:
        paths = write_outputs(result, out)
        print(f"{result.name}: {len(result.rows)} row(s) -> {paths[0]}")
        failures.extend(_failures(result))
    write_manifest(config, config_path, out)
    for line in failures:
        print(f"integration failed: {line}", file=sys.stderr)
    return EXIT_RUNTIME if failures else EXIT_OK


def cmd_run(args) -> int:
    config = _read_config(args.config)
    scenarios = _select(config, args.scenario)
    config = config._replace(scenarios=scenarios)
    results = [run_scenario(s, config.params, config.integration) for s in scenarios]
    return _emit(results, config, args.config, args.out)


def cmd_sweep(args) -> int:
    config = _read_config(args.config)
    scenario = _select(config, args.scenario)[0] if args.scenario else baseline_scenario()
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise ValidationError(f"--values must be comma-separated numbers, got {args.values!r}") from None
    result = sweep(config.params, args.param, values, scenario, config.integration)
    # the manifest records the sweep as an ordinary scenario
    swept = replace(scenario, name=result.name, sweep=Sweep.over(args.param, values))
    config = config._replace(scenarios=[swept])
    code = _emit([result], config, args.config, args.out)
    sys.stdout.write(summary_csv(result))
    return code


def cmd_audit(args) -> int:
    config = _read_config(args.config)
    scenario = _select(config, args.scenario)[0] if args.scenario else baseline_scenario()
    scenario, params = apply_overrides(scenario, config.params, scenario.overrides)
    run = integrate(initial_state(scenario, params), params, config.integration)
    audit = run.audit
    print(f"scenario: {scenario.name}")
    print(f"exit_reason: {run.exit_reason}")
    print(f"exit_time_h: {run.exit_time if run.exit_time is None else f'{run.exit_time:.9g}'}")
    print(f"max_mass_residual: {audit.max_mass:.3e}")
    print(f"max_volume_residual: {audit.max_volume:.3e}")
    print(f"max_dry_residual: {audit.max_dry:.3e}")
    print(f"prefactor_gap: {audit.prefactor_gap:.3e}")
    if run.exit_reason in ("dehydrated", "degenerate"):
        print(f"integration failed: {run.diagnostic}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_list(args) -> int:
    for scenario in builtin_scenarios():
        print(f"{scenario.name}\t{scenario.description}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="digesta", description="Small-intestine bolus digestion simulator.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the scenarios of a config file")
    run.add_argument("config")
    run.add_argument("--scenario", help="run only this scenario (config entry or built-in name)")
    run.add_argument("--out", default="out", help="output directory (default ./out)")
    run.set_defaults(func=cmd_run)

    sub.add_parser("list-scenarios", help="print the built-in scenarios").set_defaults(func=cmd_list)

    audit = sub.add_parser("audit", help="integrate one scenario and print conservation residuals")
    audit.add_argument("config")
    audit.add_argument("--scenario", help="scenario to audit (default: baseline)")
    audit.set_defaults(func=cmd_audit)

    sw = sub.add_parser("sweep", help="sweep one dotted parameter path")
    sw.add_argument("config")
    sw.add_argument("--param", required=True, help="dotted path, e.g. params.transport.tau")
    sw.add_argument("--values", required=True, help="comma-separated values")
    sw.add_argument("--scenario", help="scenario to sweep (default: baseline)")
    sw.add_argument("--out", default="out", help="output directory (default ./out)")
    sw.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, ValidationError, UnknownParameter, OutputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except DigestaError as exc:
        print(f"integration failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
