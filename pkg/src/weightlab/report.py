"""Schema-versioned JSON reports with flat CSV side tables."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__

SCHEMA = "weightlab.report/1"


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if hasattr(obj, "to_dict"):
        return _clean(obj.to_dict())
    return obj


@dataclass
class Report:
    command: str
    config: dict
    verdicts: list = field(default_factory=list)
    estimates: list = field(default_factory=list)
    tables: dict[str, list[dict]] = field(default_factory=dict)
    figures: list[str] = field(default_factory=list)
    # live objects for figure rendering; not serialized
    extras: dict = field(default_factory=dict, repr=False)

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def to_dict(self) -> dict:
        # timestamp stays null so that identical runs give identical bytes
        return _clean(
            {
                "schema": SCHEMA,
                "version": __version__,
                "timestamp": None,
                "command": self.command,
                "config": self.config,
                "passed": self.passed,
                "verdicts": self.verdicts,
                "estimates": self.estimates,
                "tables": self.tables,
                "figures": self.figures,
            }
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def table_csv(rows: list[dict]) -> str:
    """Rows to CSV; columns in first-seen order, nested values as compact JSON."""
    cols: list[str] = []
    for r in rows:
        for k in r:
            if k not in cols:
                cols.append(k)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    writer.writeheader()
    for r in rows:
        clean = _clean(r)
        writer.writerow({k: json.dumps(v, sort_keys=True) if isinstance(v, (dict, list)) else v for k, v in clean.items()})
    return buf.getvalue()


def write_report(report: Report, out: Path, fmt: str = "both") -> list[Path]:
    """Write report.json and/or one CSV per table into directory ``out``."""
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if fmt in ("json", "both"):
        path = out / "report.json"
        path.write_text(report.to_json())
        written.append(path)
    if fmt in ("csv", "both"):
        for name, rows in sorted(report.tables.items()):
            if rows:
                path = out / f"{name}.csv"
                path.write_text(table_csv(rows))
                written.append(path)
    return written
