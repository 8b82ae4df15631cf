"""``gflowfd`` command line: run, converge, certify, dump-config.

Exit codes: 0 ok, 2 configuration error, 3 solver failure, 4 certification
failure (strict mode), 5 blow-up abort.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import warnings

from . import __version__
from .driver import (
    OUT_ENV,
    ConfigError,
    RunConfig,
    certify,
    read_config,
    run_config,
    run_convergence,
)
from .presets import PRESETS

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_CERT = 4
EXIT_BLOWUP = 5

_STATUS_EXIT = {
    "ok": EXIT_OK,
    "SolverFailure": EXIT_SOLVER,
    "InstabilityError": EXIT_SOLVER,
    "CertificationFailure": EXIT_CERT,
    "BlowUpError": EXIT_BLOWUP,
}

# flag -> config key
_RUN_FLAGS = {
    "preset": str,
    "order": int,
    "cells": int,
    "dt": float,
    "dt-policy": str,
    "dt-factor": float,
    "T": float,
    "steady-tol": float,
    "max-steps": int,
    "stepper": str,
    "cert-mode": str,
    "pcg-tol": float,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _add_run_flags(p: argparse.ArgumentParser, with_out=True) -> None:
    p.add_argument("--config", help="flat 'key = value' file; flags override it")
    for flag, typ in _RUN_FLAGS.items():
        kw = {"type": typ, "default": None}
        if flag == "preset":
            kw["choices"] = sorted(PRESETS)
        p.add_argument(f"--{flag}", dest=flag.replace("-", "_"), **kw)
    if with_out:
        p.add_argument("--out", default=None, help=f"output directory (default: ${OUT_ENV} or ./gflowfd-out)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gflowfd", description="Positivity-preserving gradient-flow solver (Fokker-Planck, Keller-Segel).")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="run one preset and write CSV/JSON artifacts")
    _add_run_flags(p)
    p.add_argument("--quiet", action="store_true", help="do not print the summary")

    p = sub.add_parser("converge", help="error table against an exact solution")
    p.add_argument("--preset", default="ks_steady_source", choices=sorted(PRESETS))
    p.add_argument("--orders", default="1,2", help="comma separated element degrees (default 1,2)")
    p.add_argument("--nodes", default="9,17,33,65,129", help="comma separated nodes per axis")
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--dt-factor", type=float, default=1.0, help="dt = factor * h")
    p.add_argument("--pcg-tol", type=float, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default=None)

    p = sub.add_parser("certify", help="monotonicity certificates for the first step matrix")
    _add_run_flags(p)

    p = sub.add_parser("dump-config", help="print the resolved configuration")
    _add_run_flags(p, with_out=True)
    return parser


def _config_from_args(args) -> RunConfig:
    values = {}
    if args.config:
        try:
            values.update(read_config(args.config))
        except OSError as err:
            raise ConfigError(f"cannot read config {args.config}: {err}") from err
    for flag in _RUN_FLAGS:
        v = getattr(args, flag.replace("-", "_"))
        if v is not None:
            values[flag.replace("-", "_")] = v
    if getattr(args, "out", None):
        values["out"] = args.out
    return RunConfig.from_mapping(values)


def _default_out(cfg: RunConfig) -> str:
    return cfg.out or os.environ.get(OUT_ENV) or "gflowfd-out"


def _int_list(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"expected comma separated integers, got {text!r}") from None


def _cmd_run(args) -> int:
    cfg = _config_from_args(args).resolved()
    out = _default_out(cfg)
    outcome = run_config(cfg, out=out)
    if not args.quiet:
        for k, v in outcome.summary.items():
            print(f"{k:>22}: {v}")
        print(f"{'artifacts':>22}: {out}")
    if outcome.status != "ok":
        print(f"gflowfd: {outcome.status}: {outcome.error}", file=sys.stderr)
    return _STATUS_EXIT.get(outcome.status, EXIT_SOLVER)


def _cmd_converge(args) -> int:
    from .linalg import DEFAULT_PCG_TOL

    out = args.out or os.environ.get(OUT_ENV) or "gflowfd-out"
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        report = run_convergence(
            args.preset,
            orders=_int_list(args.orders),
            nodes=_int_list(args.nodes),
            T=args.T,
            dt_factor=args.dt_factor,
            pcg_tol=args.pcg_tol or DEFAULT_PCG_TOL,
            workers=args.workers,
            out=out,
        )
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    print(report.to_text())
    return EXIT_OK


def _cmd_certify(args) -> int:
    cfg = _config_from_args(args).resolved()
    doc = certify(cfg)
    text = json.dumps(doc, indent=2)
    print(text)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "certificate.json"), "w") as fh:
            fh.write(text + "\n")
    if cfg.cert_mode == "strict" and not doc["certified"]:
        return EXIT_CERT
    return EXIT_OK


def _cmd_dump(args) -> int:
    cfg = _config_from_args(args)
    try:
        cfg = cfg.resolved()
    except ConfigError:
        pass  # an unresolvable stop rule is still worth printing
    sys.stdout.write(cfg.to_text())
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    handler = {"run": _cmd_run, "converge": _cmd_converge, "certify": _cmd_certify, "dump-config": _cmd_dump}[args.command]
    try:
        return handler(args)
    except ConfigError as err:
        print(f"gflowfd: configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except KeyError as err:
        print(f"gflowfd: configuration error: {err.args[0]}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
