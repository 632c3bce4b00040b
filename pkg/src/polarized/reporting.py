"""CSV / JSON emission with round-trip exact floats."""
from __future__ import annotations

import csv
import io
import json
import math
from typing import Any, Iterable, Mapping, Optional, Sequence, TextIO

META_PREFIX = "# config: "


def format_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        # 17 significant digits round-trip any binary64
        return format(value, ".17g")
    return str(value)


def parse_value(text: str) -> Any:
    if text == "":
        return None
    if text in ("true", "false"):
        return text == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def write_csv(
    out: TextIO,
    columns: Sequence[str],
    rows: Iterable[Mapping[str, Any]],
    meta: Optional[Mapping[str, Any]] = None,
) -> None:
    if meta is not None:
        out.write(META_PREFIX + json.dumps(meta, sort_keys=True) + "\n")
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_value(row.get(c)) for c in columns])


def read_csv(text: str) -> tuple[Optional[dict], list]:
    """Inverse of :func:`write_csv`: returns ``(meta, rows)`` with typed values."""
    meta = None
    lines = []
    for line in text.splitlines():
        if line.startswith(META_PREFIX):
            meta = json.loads(line[len(META_PREFIX):])
        elif not line.startswith("#"):
            lines.append(line)
    reader = csv.DictReader(io.StringIO("\n".join(lines)))
    return meta, [{k: parse_value(v) for k, v in row.items()} for row in reader]


def _json_safe(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        return format_value(value)
    if isinstance(value, Mapping):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    return value


def write_json(out: TextIO, columns: Sequence[str], rows: Iterable[Mapping[str, Any]], meta: Optional[Mapping[str, Any]] = None) -> None:
    payload = {
        "config": _json_safe(dict(meta or {})),
        "rows": [{c: _json_safe(row.get(c)) for c in columns} for row in rows],
    }
    out.write(json.dumps(payload, indent=2, sort_keys=False) + "\n")


def emit(out: TextIO, fmt: str, columns: Sequence[str], rows: Iterable[Mapping[str, Any]], meta: Optional[Mapping[str, Any]] = None) -> None:
    rows = list(rows)
    if fmt == "json":
        write_json(out, columns, rows, meta)
    else:
        write_csv(out, columns, rows, meta)
