"""Command-line front end: ``randfield-mf <command> --config run.json``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from .experiments import EXPERIMENTS, ConfigError, ContractViolation, emit, load_config

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("randfield_mf")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="randfield-mf", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn in EXPERIMENTS.items():
        sp = sub.add_parser(name, help=(fn.__doc__ or "").strip().splitlines()[0])
        sp.add_argument("--config", required=True, help="JSON run configuration")
        sp.add_argument("--out", help="output file (default: stdout)")
        sp.add_argument("--format", choices=("csv", "json"), help="override output.format")
        sp.add_argument("--threads", type=int, help="worker threads (results do not depend on it)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError("--threads must be >= 1")
            cfg = replace(cfg, threads=args.threads)
        fmt = args.format or cfg.output_format
        out = args.out or cfg.output_path
        report = EXPERIMENTS[args.command](cfg)
        text = emit(report, fmt, out, cfg.config_hash)
        if out is None:
            sys.stdout.write(text)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except (ContractViolation, ArithmeticError) as exc:
        log.error("numerical contract violated: %s", exc)
        return EXIT_NUMERIC
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
