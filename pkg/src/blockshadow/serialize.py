"""Deterministic JSON/CSV emission: floats carry 17 significant digits so
repeated runs produce byte-identical artifacts."""

from __future__ import annotations

import math


def fmt_float(x: float) -> str:
    if isinstance(x, float) and (math.isnan(x) or math.isinf(x)):
        return '"%s"' % x
    return format(float(x), ".17g")


def to_json_text(obj) -> str:
    if obj is None:
        return "null"
    if obj is True:
        return "true"
    if obj is False:
        return "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return fmt_float(obj)
    if isinstance(obj, str):
        return _quote(obj)
    if isinstance(obj, dict):
        items = ",".join(f"{_quote(str(k))}:{to_json_text(v)}" for k, v in obj.items())
        return "{" + items + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(to_json_text(v) for v in obj) + "]"
    if hasattr(obj, "item"):  # numpy scalars
        return to_json_text(obj.item())
    raise TypeError(f"cannot serialize {type(obj)!r}")


def _quote(s: str) -> str:
    out = s.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n")
    return f'"{out}"'


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        fh.write(to_json_text(obj))
        fh.write("\n")


def csv_cell(value) -> str:
    if isinstance(value, float):
        return format(value, ".17g")
    if hasattr(value, "item"):
        return csv_cell(value.item())
    return str(value)


def write_csv(path, header, rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(csv_cell(v) for v in row) + "\n")
