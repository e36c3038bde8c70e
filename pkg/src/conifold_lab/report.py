"""Machine-readable verification reports.

A report is a list of checks plus a summary. Reports contain no timing or
host information, so identical configs give byte-identical files; wall
times go to a separate timings file.
"""

from __future__ import annotations

import csv
import json
import math
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator

import numpy as np

from conifold_lab import __version__
from conifold_lab.config import SCHEMA_VERSION


def jsonable(x: Any) -> Any:
    """Plain JSON types; complex numbers become [re, im], non-finite floats strings."""
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return jsonable(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (complex, np.complexfloating)):
        return [jsonable(float(x.real)), jsonable(float(x.imag))]
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if x is None or isinstance(x, str):
        return x
    raise TypeError(f"cannot serialise {type(x).__name__}")


@dataclass
class Check:
    check_id: str
    ref: str
    passed: bool
    measured: dict
    tolerance: Any = None
    inputs: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "check_id": self.check_id,
            "ref": self.ref,
            "inputs": jsonable(self.inputs),
            "measured": jsonable(self.measured),
            "tolerance": jsonable(self.tolerance),
            "passed": bool(self.passed),
        }


@dataclass
class Report:
    command: str
    config: dict
    checks: list[Check] = field(default_factory=list)
    extras: dict = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)

    def add(self, check: Check) -> Check:
        if any(c.check_id == check.check_id for c in self.checks):
            raise ValueError(f"duplicate check_id {check.check_id!r}")
        if not check.ref:
            raise ValueError(f"check {check.check_id!r} needs a reference")
        self.checks.append(check)
        return check

    @contextmanager
    def timed(self, label: str) -> Iterator[None]:
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.timings[label] = time.perf_counter() - t0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        failed = [c.check_id for c in self.checks if not c.passed]
        return {
            "schema_version": SCHEMA_VERSION,
            "tool_version": __version__,
            "command": self.command,
            "status": "pass" if self.passed else "fail",
            "summary": {"checks": len(self.checks), "passed": len(self.checks) - len(failed), "failed": failed},
            "config": jsonable(self.config),
            "checks": [c.to_dict() for c in self.checks],
            "extras": jsonable(self.extras),
        }

    def write(self, out_dir: Path, stem: str | None = None) -> Path:
        out_dir.mkdir(parents=True, exist_ok=True)
        stem = stem or self.command
        path = out_dir / f"{stem}_report.json"
        write_json(path, self.to_dict())
        write_json(out_dir / f"{stem}_timings.json", {k: round(v, 6) for k, v in self.timings.items()})
        return path


def write_json(path: Path, data: dict) -> None:
    path.write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")


def fmt(x) -> str:
    """Scientific notation with 17 significant digits (round-trips doubles)."""
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return f"{float(x):.16e}"


def write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def merge_reports(docs: list[tuple[str, dict]]) -> dict:
    """Merge report dicts; check ids are prefixed by their source label."""
    checks = []
    sources = []
    for label, doc in docs:
        if "checks" not in doc or "status" not in doc:
            raise ValueError(f"{label} is not a report")
        sources.append({"source": label, "command": doc.get("command"), "status": doc["status"]})
        for c in doc["checks"]:
            merged = dict(c)
            merged["check_id"] = f"{label}:{c['check_id']}"
            checks.append(merged)
    ids = [c["check_id"] for c in checks]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate check ids after merge")
    failed = [c["check_id"] for c in checks if not c["passed"]]
    ok = not failed and all(s["status"] == "pass" for s in sources)
    return {
        "schema_version": SCHEMA_VERSION,
        "tool_version": __version__,
        "command": "report",
        "status": "pass" if ok else "fail",
        "summary": {"checks": len(checks), "passed": len(checks) - len(failed), "failed": failed},
        "sources": sources,
        "checks": checks,
    }
