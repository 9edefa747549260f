"""
Continuous-Time Thermodynamic Formalism Toolkit - command-line entry point
One experiment document, one command, one output directory

    python backend/main.py solve --config config/example1.json --out out/solve
"""

import argparse
import logging
import sys
import traceback
from pathlib import Path
from typing import List, Optional

# Flat packages live next to this file
sys.path.insert(0, str(Path(__file__).resolve().parent))

from core.exceptions import ConfigValidationError, ThermoError  # noqa: E402
from models.experiment_config import load_experiment  # noqa: E402
from services.experiment_runner import COMMANDS, run, validate  # noqa: E402

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="thermo",
        description="Continuous-time Perron-Frobenius, Gibbs chains, entropy, pressure and large deviations",
    )
    parser.add_argument("command", choices=COMMANDS + ("validate",))
    parser.add_argument("--config", required=True, type=Path, help="experiment document (JSON)")
    parser.add_argument("--seed", type=int, default=None, help="overrides the seed in the config")
    parser.add_argument("--out", type=Path, default=None, help="output directory (default ./out/<command>)")
    parser.add_argument("--quiet", action="store_true", help="log warnings and errors only")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    if args.command == "validate":
        try:
            text = args.config.read_text()
        except OSError as e:
            print(f"error: <file>: cannot read {args.config}: {e}")
            return EXIT_USAGE
        diagnostics = validate(text)
        for item in diagnostics:
            print(item)
        return EXIT_USAGE if any(item.level == "error" for item in diagnostics) else EXIT_OK

    out_dir = args.out or Path("out") / args.command
    try:
        config = load_experiment(args.config)
        result = run(args.command, config, out_dir, args.seed)
    except ConfigValidationError as e:
        for line in e.diagnostics:
            print(f"error: {line}" if not line.startswith(("error", "warning")) else line)
        return EXIT_USAGE
    except ThermoError as e:
        origin = Path(traceback.extract_tb(e.__traceback__)[-1].filename).stem
        logger.error(f"{args.command} failed in {origin}: {type(e).__name__}: {e}")
        return EXIT_FAILURE

    for name, value in result.summary.items():
        logger.info(f"{name}: {value}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
