"""Simulated paths as JSON lines: one object per path, floats at 17 significant digits."""
import json
import logging
from pathlib import Path as FilePath
from typing import Iterable, List

import numpy as np

from src.domain.models.path_models import Path
from src.utils.display_utils import format_float
from src.utils.exceptions import ReportWriteError

logger = logging.getLogger(__name__)


def _array(values: np.ndarray) -> str:
    return "[" + ", ".join(format_float(v) for v in values) + "]"


def path_to_line(path: Path) -> str:
    return (
        f'{{"theta": {format_float(path.theta)}, "horizon": {format_float(path.horizon)}, '
        f'"event_times": {_array(path.event_times)}, "claims": {_array(path.claims)}}}\n'
    )


def path_from_record(record: dict) -> Path:
    return Path(
        theta=float(record["theta"]),
        event_times=np.asarray(record["event_times"], dtype=float),
        claims=np.asarray(record["claims"], dtype=float),
        horizon=float(record["horizon"]),
    )


def dump_paths(paths: Iterable[Path], destination: str) -> int:
    target = FilePath(destination)
    count = 0
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        with open(target, "w", encoding="utf-8", newline="") as f:
            for path in paths:
                f.write(path_to_line(path))
                count += 1
    except OSError as e:
        raise ReportWriteError(str(target), e.strerror or str(e)) from e
    logger.info(f"Dumped {count} paths to {target}")
    return count


def read_paths(source: str) -> List[Path]:
    with open(source, "r", encoding="utf-8") as f:
        return [path_from_record(json.loads(line)) for line in f if line.strip()]
