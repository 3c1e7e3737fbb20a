"""Byte-stable report files: report.json, study.csv and plotdata.csv.

Floats are written with 17 significant digits, non-finite floats as
``null`` in JSON and ``nan``/``inf`` in CSV.  Key and column order is fixed.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from .checkers import DEFINITIONS, CheckReport
from .experiments import StudyTable


def fmt_float(v: float) -> str:
    return format(float(v), ".17g")


def _json(obj, indent=0) -> str:
    pad, inner = "  " * indent, "  " * (indent + 1)
    if isinstance(obj, CheckReport):
        obj = obj.to_dict()
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt_float(obj) if math.isfinite(obj) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{json.dumps(str(k))}: {_json(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, np.number)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(_json(v) for v in obj) + "]"
        return "[\n" + ",\n".join(inner + _json(v, indent + 1) for v in obj) + "\n" + pad + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj) -> str:
    return _json(obj) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj), encoding="utf-8")
    return path


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return fmt_float(v)
    if v is None:
        return ""
    return str(v)


def _parse_cell(s: str):
    if s == "true":
        return True
    if s == "false":
        return False
    if s == "":
        return ""
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def table_to_csv(table: StudyTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.columns)
    for row in table.rows:
        w.writerow([_cell(row[c]) for c in table.columns])
    return buf.getvalue()


def write_table(path, table: StudyTable) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(table_to_csv(table), encoding="utf-8")
    return path


def read_table(path) -> StudyTable:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        columns = next(reader)
        rows = [dict(zip(columns, (_parse_cell(c) for c in r))) for r in reader]
    return StudyTable(columns, rows)


def plotdata_table(reports: list[CheckReport], dimension: int) -> StudyTable:
    """One row per point with a residual column per definition (nan when absent)."""
    cols = [f"x{i + 1}" for i in range(dimension)] + [f"residual_{d}" for d in DEFINITIONS]
    by_point: dict[tuple, dict] = {}
    for r in reports:
        key = tuple(r.point)
        row = by_point.setdefault(key, {c: math.nan for c in cols})
        for i, v in enumerate(r.point):
            row[f"x{i + 1}"] = float(v)
        row[f"residual_{r.definition}"] = r.residual
    table = StudyTable(cols)
    for row in by_point.values():
        table.add(**row)
    return table


def emit_reports(out_dir, reports: list[CheckReport], study: StudyTable | None, dimension: int,
                 extra: dict | None = None) -> dict[str, Path]:
    """Write report.json, study.csv and plotdata.csv (headers only when empty)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"report": write_json(out / "report.json", list(reports))}
    study = study if study is not None else StudyTable([])
    paths["study"] = write_table(out / "study.csv", study)
    paths["plotdata"] = write_table(out / "plotdata.csv", plotdata_table(reports, dimension))
    if extra is not None:
        paths["summary"] = write_json(out / "summary.json", extra)
    return paths
