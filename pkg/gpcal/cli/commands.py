"""
Subcommand handlers.

Commands:
- generate  Write a synthetic data set
- invert    Sample the posterior and write the archive
- optimize  Maximize the density and write the optimum (plus Laplace archive)
- report    Write parameter, convergence and discrepancy summaries
- predict   Write predictive bands

Each handler takes the parsed arguments and returns an exit code; failures
propagate as exceptions and are mapped to exit codes by gpcal.main.

Version: 1.0.0
"""

import argparse
import logging
import time

from gpcal.core.errors import ExitCode
from gpcal.schemas.config import load_run_config
from gpcal.services.calibration import CalibrationService, create_calibration_service

logger = logging.getLogger(__name__)


def _service(args: argparse.Namespace) -> CalibrationService:
    return create_calibration_service(load_run_config(args.config))


def generate(args: argparse.Namespace) -> int:
    data = _service(args).generate(args.out)
    logger.info(f"Generated {len(data.streams)} streams: " + ", ".join(s.name for s in data.streams))
    return ExitCode.SUCCESS


def invert(args: argparse.Namespace) -> int:
    start = time.time()
    archive = _service(args).invert(args.data, args.out, scenario=args.scenario, seed=args.seed)
    elapsed = time.time() - start
    logger.info(f"Inversion finished in {elapsed:.1f}s: {len(archive)} samples ({archive.scenario} scenario)")
    return ExitCode.SUCCESS


def optimize(args: argparse.Namespace) -> int:
    report = _service(args).optimize(args.data, args.out, scenario=args.scenario)
    logger.info(f"Optimum: theta={report.theta_hat.tolist()}, converged={report.converged}")
    return ExitCode.SUCCESS


def report(args: argparse.Namespace) -> int:
    CalibrationService.report(args.archive, args.out)
    return ExitCode.SUCCESS


def predict(args: argparse.Namespace) -> int:
    bands = CalibrationService.predict(args.archive, args.data, args.out)
    for name, band in bands.items():
        kind = "process" if band.has_process else "model"
        logger.info(f"{name}: {int(band.outside(kind).sum())}/{len(band.table)} observations outside the {kind} band")
    return ExitCode.SUCCESS
