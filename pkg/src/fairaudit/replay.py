"""Disparity annotations re-derived from published aggregate values.

Input CSV columns: ``table,scope,group,metric,value`` plus optional
``mode`` (relative | absolute) and ``published`` (the printed annotation in
percent, e.g. ``-12.3``).  Arithmetic runs on ``Decimal`` so differences of
four-decimal values are exact.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Sequence

from fairaudit.errors import InputError
from fairaudit.fairness import ABSOLUTE, RELATIVE, reference_gap, relative_disparity

REQUIRED = ("table", "scope", "group", "metric", "value")
HUNDRED = Decimal(100)


@dataclass(frozen=True)
class PublishedValue:
    table: str
    scope: str
    group: str
    metric: str
    value: Decimal | None
    mode: str = RELATIVE
    published: Decimal | None = None


def _decimal(text: str, what: str, row: int) -> Decimal | None:
    text = text.strip().strip("()").rstrip("%").strip()
    if text in ("", "undefined"):
        return None
    try:
        return Decimal(text)
    except InvalidOperation:
        raise InputError(f"row {row}: cannot parse {what} {text!r}") from None


def load_value_table(path) -> list[PublishedValue]:
    path = Path(path)
    if not path.exists():
        raise InputError(f"value table not found: {path}")
    out = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in REQUIRED if c not in (reader.fieldnames or [])]
        if missing:
            raise InputError(f"{path}: missing columns {missing}")
        for row, rec in enumerate(reader, start=1):
            mode = (rec.get("mode") or RELATIVE).strip()
            if mode not in (RELATIVE, ABSOLUTE):
                raise InputError(f"{path}: unknown mode {mode!r} at row {row}")
            out.append(PublishedValue(rec["table"], rec["scope"], rec["group"], rec["metric"],
                                      _decimal(rec["value"], "value", row), mode,
                                      _decimal(rec.get("published") or "", "published annotation", row)))
    return out


def format_percent(d: Decimal | float, digits: int = 1) -> str:
    return f"({float(d) * 100:.{digits}f}%)"


def replay(rows: Sequence[PublishedValue]) -> list[dict]:
    """Disparity of each value against the best value of its (table, metric, scope, mode)."""
    keyed = {i: r for i, r in enumerate(rows)}
    disp: dict = {}
    for mode in (RELATIVE, ABSOLUTE):
        part = {i: r for i, r in keyed.items() if r.mode == mode}
        if part:
            disp.update(relative_disparity({i: r.value for i, r in part.items()},
                                           scope={i: (r.table, r.metric, r.scope) for i, r in part.items()},
                                           mode=mode, strict=False))
    out = []
    for i, r in keyed.items():
        d = disp[i]
        points = None if d is None else d.disparity * HUNDRED
        diff = None if points is None or r.published is None else abs(points - r.published)
        out.append({
            "table": r.table, "scope": r.scope, "group": r.group, "metric": r.metric, "mode": r.mode,
            "value": r.value, "baseline": None if d is None else keyed[d.baseline].group,
            "disparity": None if d is None else d.disparity, "points": points,
            "annotation": "" if d is None or d.is_baseline else format_percent(d.disparity),
            "published": r.published, "diff_points": diff,
        })
    return out


def reference_gaps(rows: Sequence[PublishedValue], metric: str, reference_scope: str,
                   table: str | None = None) -> list[dict]:
    """value - max(value over the reference scope), for every row of ``metric``."""
    sel = [r for r in rows if r.metric == metric and (table is None or r.table == table) and r.value is not None]
    refs = [r for r in sel if r.scope == reference_scope]
    if not refs:
        raise InputError(f"no {metric!r} values in reference scope {reference_scope!r}")
    best = max(refs, key=lambda r: r.value)
    return [{"table": r.table, "scope": r.scope, "group": r.group, "metric": metric, "value": r.value,
             "reference": f"{best.scope} {best.group}", "reference_value": best.value,
             "gap": reference_gap(r.value, [x.value for x in refs])} for r in sel]


REPLAY_COLUMNS = ["table", "scope", "group", "metric", "mode", "value", "baseline", "disparity", "points",
                  "annotation", "published", "diff_points"]
GAP_COLUMNS = ["table", "scope", "group", "metric", "value", "reference", "reference_value", "gap"]


def _cell(v) -> str:
    return "undefined" if v is None else str(v)


def write_csv(records: Sequence[dict], columns: Sequence[str], path) -> Path:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for rec in records:
            w.writerow([_cell(rec[c]) for c in columns])
    tmp.replace(path)
    return path


def to_markdown(records: Sequence[dict]) -> str:
    lines = []
    current = None
    for r in records:
        key = (r["table"], r["metric"])
        if key != current:
            current = key
            lines += ["", f"## {r['table']}: {r['metric']}", "", "| Scope | Group | Value | Published | Diff (pts) |",
                      "|---|---|---|---|---|"]
        value = _cell(r["value"]) + (f" {r['annotation']}" if r["annotation"] else "")
        pub = "" if r["published"] is None else f"({r['published']}%)"
        diff = "" if r["diff_points"] is None else f"{float(r['diff_points']):.3f}"
        lines.append(f"| {r['scope']} | {r['group']} | {value} | {pub} | {diff} |")
    return "\n".join(lines).lstrip("\n") + "\n"
