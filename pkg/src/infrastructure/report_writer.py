import csv
import io
import json
import logging
import math
from enum import Enum
from pathlib import Path
from typing import Iterable, List, Optional

from src.domain.models.common_models import OutputFormat
from src.domain.models.report_models import ReportRow
from src.utils.constants import REPORT_COLUMNS
from src.utils.display_utils import format_float
from src.utils.exceptions import ReportWriteError

logger = logging.getLogger(__name__)


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return format_float(value)
    return str(value)


def _json_value(value) -> str:
    """JSON literal with floats at 17 significant digits; non-finite floats become strings."""
    if value is None:
        return "null"
    if isinstance(value, Enum):
        return json.dumps(value.value)
    if isinstance(value, bool) or isinstance(value, int):
        return json.dumps(value)
    if isinstance(value, float):
        return format_float(value) if math.isfinite(value) else json.dumps(format_float(value))
    return json.dumps(value)


def render_csv(rows: Iterable[ReportRow]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for row in rows:
        record = row.model_dump()
        writer.writerow([_cell(record[column]) for column in REPORT_COLUMNS])
    return buffer.getvalue()


def render_json_lines(rows: Iterable[ReportRow]) -> str:
    lines = []
    for row in rows:
        record = row.model_dump()
        fields = ", ".join(f"{json.dumps(column)}: {_json_value(record[column])}" for column in REPORT_COLUMNS)
        lines.append("{" + fields + "}\n")
    return "".join(lines)


def render(rows: List[ReportRow], format: OutputFormat) -> str:
    return render_csv(rows) if format is OutputFormat.CSV else render_json_lines(rows)


def write_report(rows: List[ReportRow], format: OutputFormat, destination: Optional[str]) -> str:
    """
    Writes the rows to ``destination`` ("-" for stdout) and returns the rendered text.
    Every float is printed with 17 significant digits, so a report parses back to the
    same doubles.
    """
    text = render(rows, format)
    if destination in (None, "-"):
        return text
    target = Path(destination)
    try:
        # 1. Make sure the directory exists
        target.parent.mkdir(parents=True, exist_ok=True)
        # 2. Write in one go; newline="" keeps "\n" line ends on every platform
        with open(target, "w", encoding="utf-8", newline="") as f:
            f.write(text)
    except OSError as e:
        raise ReportWriteError(str(target), e.strerror or str(e)) from e
    logger.info(f"Wrote {len(rows)} report rows to {target}")
    return text


def read_json_lines(text: str) -> List[dict]:
    return [json.loads(line) for line in text.splitlines() if line.strip()]
