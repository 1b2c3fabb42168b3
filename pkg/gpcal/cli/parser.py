"""
Argument parser aggregation.

Combines the subcommand parsers and binds each to its handler.

Version: 1.0.0
"""

import argparse

from gpcal import __version__
from gpcal.cli import commands


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gpcal",
        description="Bayesian inversion against multiple data streams with Gaussian-process model discrepancy",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="Write a synthetic data set")
    p.add_argument("--config", required=True, help="Run configuration (JSON)")
    p.add_argument("--out", required=True, help="Output data directory")
    p.set_defaults(handler=commands.generate)

    p = sub.add_parser("invert", help="Sample the posterior")
    p.add_argument("--config", required=True, help="Run configuration (JSON)")
    p.add_argument("--data", required=True, help="Data directory with stream_<name>.csv files")
    p.add_argument("--out", required=True, help="Output directory for archive.csv/archive.json")
    p.add_argument("--scenario", choices=["ignore", "gp"], default=None, help="Override config scenario")
    p.add_argument("--seed", type=int, default=None, help="Override sampler seed")
    p.set_defaults(handler=commands.invert)

    p = sub.add_parser("optimize", help="Maximize the posterior density (BFGS)")
    p.add_argument("--config", required=True, help="Run configuration (JSON)")
    p.add_argument("--data", required=True, help="Data directory")
    p.add_argument("--out", required=True, help="Output directory for optimum.json")
    p.add_argument("--scenario", choices=["ignore", "gp-fixed"], default=None, help="Override objective")
    p.set_defaults(handler=commands.optimize)

    p = sub.add_parser("report", help="Summaries and convergence diagnostics")
    p.add_argument("--archive", required=True, help="archive.csv or its directory")
    p.add_argument("--out", required=True, help="Output directory")
    p.set_defaults(handler=commands.report)

    p = sub.add_parser("predict", help="Predictive bands per stream")
    p.add_argument("--archive", required=True, help="archive.csv or its directory")
    p.add_argument("--data", required=True, help="Data directory")
    p.add_argument("--out", required=True, help="Output directory")
    p.set_defaults(handler=commands.predict)

    return parser
