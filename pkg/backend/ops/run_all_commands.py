"""
Run every command of one experiment document into <out>/<command>/ and print the artifact counts
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from core.exceptions import ThermoError  # noqa: E402
from models.experiment_config import load_experiment  # noqa: E402
from services.experiment_runner import COMMANDS, run  # noqa: E402

logger = logging.getLogger(__name__)


def run_all(config_path: Path, out_root: Path, commands: List[str], seed: Optional[int] = None) -> Dict[str, int]:
    """Artifact count per command; -1 marks a command that failed"""
    config = load_experiment(config_path)
    counts = {}
    for command in commands:
        try:
            result = run(command, config, out_root / command, seed)
            counts[command] = len(result.artifacts)
        except ThermoError as e:
            logger.error(f"[RUN] {command} failed: {type(e).__name__}: {e}")
            counts[command] = -1
    return counts


def main(argv: Optional[List[str]] = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("config", type=Path)
    parser.add_argument("--out", type=Path, default=Path("out"))
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--skip", nargs="*", default=[], choices=COMMANDS)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    commands = [c for c in COMMANDS if c not in args.skip]
    print(f"[RUN] {args.config} -> {args.out} ({', '.join(commands)})")
    counts = run_all(args.config, args.out, commands, args.seed)
    print("[COUNTS]", counts)
    return 1 if any(n < 0 for n in counts.values()) else 0


if __name__ == "__main__":
    sys.exit(main())
