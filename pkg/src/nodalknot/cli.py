"""Command line entry point ``nodalknot``.

Subcommands run one stage each (``full`` chains the end-to-end ones and
``report`` collates earlier results).  Exit status: 0 when every check
passed, 1 when a check failed, 2 for configuration errors, and a
stage-specific code (see :data:`EXIT_CODES`) when a stage raised.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

from . import io
from .config import ConfigError, ExperimentConfig
from .pipeline import StageError, Workspace, collate, run_stage, versions, write_report

EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_CODES = {"model-spectrum": 3, "tube-verify": 4, "sweep-eps": 5, "collapse": 6, "extract": 7,
              "highdim": 8, "report": 9}

COMMANDS = {
    "model-spectrum": ("model-spectrum",),
    "tube-verify": ("tube-verify",),
    "sweep-eps": ("sweep-eps",),
    "collapse": ("collapse",),
    "extract": ("extract",),
    "highdim": ("highdim",),
    "full": ("model-spectrum", "collapse", "extract"),
}

HELP = {
    "model-spectrum": "closed-form Neumann spectrum of the model tube",
    "tube-verify": "standalone tube FEM against the model spectrum, with refinement study",
    "sweep-eps": "first eigenvalue of the shrunk exterior metric along the eps list",
    "collapse": "Jacobian checks and Newton drive to a degenerate first cluster",
    "extract": "nodal curve of the collapsed pair, knot invariants and stability",
    "highdim": "semi-analytic checks on Sigma x D^m",
    "full": "model-spectrum, collapse and extract in one run",
    "report": "collate stage summaries; nonzero status iff a check failed",
}


def _common_options(parser: argparse.ArgumentParser, default) -> None:
    parser.add_argument("--config", metavar="PATH", default=default,
                        help="TOML configuration (defaults fill missing keys)")
    parser.add_argument("--out", metavar="DIR", default=default, help="output directory (overrides output.dir)")
    parser.add_argument("--seed", type=int, metavar="N", default=default, help="seed (overrides the configuration)")
    parser.add_argument("--print-config", action="store_true", default=default,
                        help="print the effective configuration and exit")
    parser.add_argument("--quiet", action="store_true", default=default,
                        help="only warnings and the final status lines")


def build_parser() -> argparse.ArgumentParser:
    """Options are accepted before or after the subcommand.

    The subcommand copies use ``SUPPRESS`` defaults so that they do not
    overwrite values given before the subcommand name.
    """
    parser = argparse.ArgumentParser(prog="nodalknot",
                                     description="Knotted nodal lines of degenerate first eigenfunctions.")
    _common_options(parser, None)
    parser.set_defaults(print_config=False, quiet=False)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    for name in list(COMMANDS) + ["report"]:
        sp = sub.add_parser(name, help=HELP[name], description=HELP[name])
        _common_options(sp, argparse.SUPPRESS)
    return parser


def _report(cfg: ExperimentConfig, quiet: bool) -> int:
    report = collate(cfg.out_dir)
    if not report["stages"]:
        print(f"no stage summaries found under {cfg.out_dir}", file=sys.stderr)
        return EXIT_CODES["report"]
    write_report(cfg.out_dir, report)
    for st, data in report["stages"].items():
        for c in data["checks"]:
            if not quiet or not c["passed"]:
                print(f"{'PASS' if c['passed'] else 'FAIL'} {st}:{c['name']}")
        if data.get("error"):
            print(f"FAIL {st}: {data['error']}")
    print("report: " + ("all checks passed" if report["passed"] else f"{len(report['failed'])} failed"))
    return 0 if report["passed"] else EXIT_CHECK_FAILED


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        cfg = ExperimentConfig.load(args.config, seed=args.seed, out=args.out)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.print_config:
        sys.stdout.write(cfg.to_toml())
        return 0
    if args.command is None:
        parser.print_help()
        return EXIT_CONFIG
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    if args.command == "report":
        return _report(cfg, args.quiet)

    ws = Workspace(cfg)
    command = " ".join(["nodalknot"] + list(argv if argv is not None else sys.argv[1:]))
    status = 0
    timings = {}
    start = time.perf_counter()
    for stage in COMMANDS[args.command]:
        try:
            res = run_stage(stage, ws, command)
        except ConfigError as exc:
            print(f"configuration error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        except StageError as exc:
            print(f"FAIL {exc}", file=sys.stderr)
            status = EXIT_CODES[stage]
            break
        timings[stage] = res.seconds
        for c in res.checks:
            if not args.quiet or not c.passed:
                print(f"{'PASS' if c.passed else 'FAIL'} {stage}:{c.name} = {_short(c.value)} ({c.requirement})")
        if not res.passed:
            status = EXIT_CHECK_FAILED
    if args.command == "full":
        io.write_json(Path(cfg.out_dir) / "full-manifest.json",
                      {"command": command, "config_hash": cfg.digest(), "seed": cfg.seed, "versions": versions(),
                       "timings": {**timings, "total": time.perf_counter() - start}, "status": status})
    return status


def _short(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, list):
        return "[" + ", ".join(_short(x) for x in v) + "]"
    return str(v)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
