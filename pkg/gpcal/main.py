"""
Command-line entry point.

Main program with:
- Structured logging to stderr (tables and files carry the results)
- Subcommand dispatch
- Exception to exit-code mapping: 0 success, 2 configuration error,
  3 numerical failure, 4 I/O failure

Run with: gpcal <command> [options]  or  python -m gpcal.main <command>

Version: 1.0.0
"""

import logging
import sys
from collections.abc import Sequence

from pydantic import ValidationError

from gpcal.cli.parser import build_parser
from gpcal.core.errors import ExitCode, GpcalError

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def setup_logging(settings_override=None):
    """
    Configure process logging.

    Args:
        settings_override: Optional Settings instance. If None, attempts to load settings.
                          Falls back to basic logging if settings unavailable.
    """
    try:
        if settings_override is None:
            from gpcal.core.config import get_settings

            settings = get_settings()
        else:
            settings = settings_override
    except Exception:
        # Minimal fallback logger config if settings unavailable
        logging.basicConfig(level=logging.INFO, format=LOG_FORMAT, handlers=[logging.StreamHandler(sys.stderr)])
        return

    logging.basicConfig(
        level=getattr(logging, settings.log_level),
        format=LOG_FORMAT,
        handlers=[logging.StreamHandler(sys.stderr)],
        force=True,
    )

    if settings.log_file:
        file_handler = logging.FileHandler(settings.log_file)
        file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
        logging.getLogger().addHandler(file_handler)

    # Reduce noise from external libraries
    logging.getLogger("numexpr").setLevel(logging.WARNING)


def _format_validation_error(exc: ValidationError) -> str:
    parts = []
    for error in exc.errors():
        field = ".".join(str(p) for p in error.get("loc", ())) or "<root>"
        parts.append(f"{field}: {error.get('msg')}")
    return "; ".join(parts)


def main(argv: Sequence[str] | None = None) -> int:
    """
    Parse arguments, run the subcommand and return its exit code.

    Args:
        argv: Arguments without the program name (default: sys.argv[1:])
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging()
    logger = logging.getLogger(__name__)

    try:
        return int(args.handler(args))
    except ValidationError as e:
        logger.error(f"Invalid configuration: {_format_validation_error(e)}")
        return ExitCode.CONFIG_ERROR
    except GpcalError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    except OSError as e:
        logger.error(f"I/O failure: {e}")
        return ExitCode.IO_FAILURE
    except Exception as e:
        logger.error(f"Unexpected error: {type(e).__name__}: {e}", exc_info=True)
        return ExitCode.NUMERICAL_FAILURE


def run() -> None:
    """Console-script entry point."""
    sys.exit(main())


if __name__ == "__main__":
    run()
