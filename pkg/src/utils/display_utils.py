import math

from src.utils.constants import FLOAT_DIGITS


def format_number(value: float) -> str:
    """
    Shortest text that reads back to the same double; integral values print without
    a decimal point so formulas read like "10*theta^2".
    """
    value = float(value)
    if math.isfinite(value) and value.is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def format_float(value: float | None) -> str:
    """17 significant digits, the report format for every float column."""
    if value is None:
        return ""
    value = float(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return format(value, f".{FLOAT_DIGITS}g")


def render_table(rows, columns) -> str:
    """Fixed-width text table of report rows for the terminal."""
    cells = []
    for row in rows:
        record = row.model_dump()
        line = []
        for column in columns:
            value = record[column]
            if isinstance(value, float):
                line.append(f"{value:.10g}")
            elif value is None:
                line.append("")
            else:
                line.append(str(getattr(value, "value", value)))
        cells.append(line)
    widths = [max([len(column)] + [len(line[i]) for line in cells]) for i, column in enumerate(columns)]
    header = "  ".join(column.ljust(width) for column, width in zip(columns, widths))
    body = ["  ".join(cell.ljust(width) for cell, width in zip(line, widths)).rstrip() for line in cells]
    return "\n".join([header.rstrip(), *body])
