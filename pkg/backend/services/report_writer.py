"""
Report Writer Service - deterministic JSON documents and CSV tables for one run
JSON is written with sorted keys and shortest round-trip float repr; tables go through pandas
"""

import json
from pathlib import Path
from typing import Any, Dict, List, Union
import logging

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)


def _plain(value: Any) -> Any:
    """JSON fallback for numpy scalars and arrays"""
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"cannot serialize {type(value).__name__}")


def dumps(document: Dict[str, Any]) -> str:
    return json.dumps(document, sort_keys=True, indent=2, default=_plain, allow_nan=True) + "\n"


class ReportWriter:
    """Writes the artifacts of one command into its output directory"""

    def __init__(self, out_dir: Union[str, Path]):
        self.out_dir = Path(out_dir)
        self.written: List[Path] = []

    def _target(self, name: str) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        return self.out_dir / name

    def write_json(self, name: str, document: Dict[str, Any]) -> Path:
        path = self._target(name)
        path.write_text(dumps(document))
        self.written.append(path)
        logger.info(f"Wrote {path}")
        return path

    def write_frame(self, name: str, frame: pd.DataFrame) -> Path:
        path = self._target(name)
        frame.to_csv(path, index=False, lineterminator="\n")
        self.written.append(path)
        logger.info(f"Wrote {path} ({len(frame)} rows)")
        return path


def read_json(path: Union[str, Path]) -> Dict[str, Any]:
    return json.loads(Path(path).read_text())


def read_frame(path: Union[str, Path]) -> pd.DataFrame:
    return pd.read_csv(path)
