"""Command line interface.

    agentfork run --workload FILE [--config FILE] [--seed N]
                  [--report PATH] [--format human|machine]
    agentfork generate --seed N [--params FILE] --out PATH
    agentfork validate WORKLOAD_FILE

Exit code 0 on a completed simulation (or valid file), nonzero on schema
or config errors. The --workload argument also accepts the name of a
bundled workload (see ``agentfork validate --list``).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError, SimulatorConfig
from .harness import (
    GenerateParams,
    WorkloadError,
    bundled_workload_path,
    emit_report,
    generate_synthetic,
    list_bundled_workloads,
    load_workload,
    run_simulation,
    save_workload,
    validate_workload_data,
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="agentfork", description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate a workload and emit a report")
    run.add_argument("--workload", required=True, help="workload file or bundled workload name")
    run.add_argument("--config", help="JSON config file")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--report", help="write the report here instead of stdout")
    run.add_argument("--format", choices=("human", "machine"), default="human")

    generate = sub.add_parser("generate", help="generate a synthetic workload")
    generate.add_argument("--seed", type=int, required=True)
    generate.add_argument("--params", help="JSON file of generation parameters")
    generate.add_argument("--out", required=True, help="output workload path")

    validate = sub.add_parser("validate", help="schema-check a workload file")
    validate.add_argument("workload", nargs="?", help="workload file to check")
    validate.add_argument("--list", action="store_true", help="list bundled workloads")
    return parser


def _resolve_workload(arg: str) -> Path:
    path = Path(arg)
    if path.exists():
        return path
    if "/" not in arg and not arg.endswith(".json"):
        return bundled_workload_path(arg)
    raise WorkloadError([f"$: no such file {arg}"])


def _cmd_run(args) -> int:
    workload = load_workload(_resolve_workload(args.workload))
    config = SimulatorConfig.from_file(args.config) if args.config else SimulatorConfig()
    report = run_simulation(workload, config, args.seed)
    text = emit_report(report, args.format)
    if args.report:
        Path(args.report).parent.mkdir(parents=True, exist_ok=True)
        Path(args.report).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_generate(args) -> int:
    params = GenerateParams()
    if args.params:
        try:
            data = json.loads(Path(args.params).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise WorkloadError([f"$: no such params file {args.params}"])
        except json.JSONDecodeError as exc:
            raise WorkloadError([f"$: invalid JSON in params file ({exc})"])
        if not isinstance(data, dict):
            raise WorkloadError(["$: params file must be a JSON object"])
        params = GenerateParams.from_dict(data)
    spec = generate_synthetic(args.seed, params)
    save_workload(spec, args.out)
    print(f"wrote {args.out} ({len(spec.memory)} memory items, {len(spec.trajectory)} steps)")
    return 0


def _cmd_validate(args) -> int:
    if args.list:
        for name in list_bundled_workloads():
            print(name)
        return 0
    if not args.workload:
        print("validate: a workload file is required (or use --list)", file=sys.stderr)
        return 2
    try:
        data = json.loads(Path(args.workload).read_text(encoding="utf-8"))
    except FileNotFoundError:
        print(f"{args.workload}: no such file", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"{args.workload}: invalid JSON ({exc})", file=sys.stderr)
        return 2
    errors = validate_workload_data(data)
    if errors:
        for err in errors:
            print(err, file=sys.stderr)
        return 1
    print(f"{args.workload}: ok")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "generate":
            return _cmd_generate(args)
        return _cmd_validate(args)
    except (WorkloadError, ConfigError) as exc:
        for line in str(exc).split("; "):
            print(line, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
