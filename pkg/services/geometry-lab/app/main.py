"""geometry-lab – ``dvlab`` command-line entry-point."""

from __future__ import annotations

import logging
import sys
from collections.abc import Sequence

from common.errors import EXIT_OK, EXIT_VERDICT_FAILED, describe, exit_code_for

from app.cli.commands import run_command
from app.cli.emit import emit_report
from app.cli.parser import parse_args
from app.core.logging import init_logging
from app.core.parallel import use_threads

logger = logging.getLogger(__name__)


def main(argv: Sequence[str] | None = None) -> int:
    init_logging()
    try:
        config = parse_args(argv)
        logger.debug("run config %s", config.to_canonical())
        with use_threads(config.threads):
            report = run_command(config)
        emit_report(report, config)
    except Exception as exc:  # noqa: BLE001
        print(describe(exc), file=sys.stderr)
        return exit_code_for(exc)
    return EXIT_OK if report.passed else EXIT_VERDICT_FAILED


if __name__ == "__main__":
    sys.exit(main())
