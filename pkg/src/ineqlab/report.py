"""Check records and their JSON and CSV serialisation."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

__all__ = ["DeficitReport", "ReportWriter", "inputs_digest"]


def _clean(x):
    """JSON-safe copy: non-finite floats become strings, numpy scalars Python."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if hasattr(x, "item") and not isinstance(x, (str, bytes)):
        x = x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    if isinstance(x, complex):
        return [_clean(x.real), _clean(x.imag)]
    return x


def inputs_digest(**inputs) -> str:
    """Short hash of the JSON form of the inputs of a check."""
    text = json.dumps(_clean(inputs), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _fmt(x: float) -> str:
    return repr(float(x))


@dataclass(frozen=True)
class DeficitReport:
    """Outcome of one check.

    ``margin`` is the quantity that must stay above ``-budget``; ``passed``
    is derived from the two and cannot disagree with them. ``measured``
    carries the raw values behind the margin.
    """

    suite: str
    check_id: str
    config_hash: str
    inputs_digest: str
    measured: dict
    bound: float
    margin: float
    budget: float
    wall_time: float = field(default=0.0, compare=False)

    @property
    def passed(self) -> bool:
        return bool(self.margin >= -self.budget)

    def to_json(self) -> dict:
        return _clean(
            {
                "suite": self.suite,
                "check_id": self.check_id,
                "config_hash": self.config_hash,
                "inputs_digest": self.inputs_digest,
                "measured": self.measured,
                "bound": self.bound,
                "margin": self.margin,
                "budget": self.budget,
                "pass": self.passed,
                "wall_time": self.wall_time,
            }
        )

    def csv_row(self) -> list[str]:
        return [
            self.config_hash,
            self.suite,
            self.check_id,
            _fmt(self.margin),
            _fmt(self.budget),
            "pass" if self.passed else "FAIL",
        ]


CSV_HEADER = ["config_hash", "suite", "check", "min_margin", "budget", "pass"]


class ReportWriter:
    """Writes ``report.json`` and ``summary.csv`` after every added record.

    Rewriting both files on each addition means that a crash leaves the
    results gathered so far on disk. Wall times live only in the JSON file
    and in ``metadata.json``, so the CSV depends only on the inputs.
    """

    def __init__(self, out_dir: str | Path):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.records: list[DeficitReport] = []

    @property
    def json_path(self) -> Path:
        return self.dir / "report.json"

    @property
    def csv_path(self) -> Path:
        return self.dir / "summary.csv"

    def add(self, rec: DeficitReport) -> None:
        self.records.append(rec)
        self.flush()

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.records:
            w.writerow(r.csv_row())
        return buf.getvalue()

    def flush(self) -> None:
        self.json_path.write_text(
            json.dumps([r.to_json() for r in self.records], indent=2) + "\n"
        )
        self.csv_path.write_text(self.csv_text())

    def write_metadata(self, **meta) -> None:
        (self.dir / "metadata.json").write_text(json.dumps(_clean(meta), indent=2) + "\n")

    @property
    def all_passed(self) -> bool:
        return all(r.passed for r in self.records)
