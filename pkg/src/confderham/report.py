"""CSV and plain-text outputs of scenario runs."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


@dataclass
class Table:
    header: list
    rows: list = field(default_factory=list)

    def add(self, *values) -> None:
        if len(values) != len(self.header):
            raise ValueError(f"row has {len(values)} fields, header has {len(self.header)}")
        self.rows.append(list(values))


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class ScenarioResult:
    name: str
    experiment: str
    seed: int
    tables: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    errors: list = field(default_factory=list)

    def table(self, key: str, header: Sequence[str]) -> Table:
        if key not in self.tables:
            self.tables[key] = Table(["scenario", "seed", "stage"] + list(header))
        return self.tables[key]

    def check(self, name: str, passed: bool, detail: str = "") -> bool:
        self.checks.append(Check(name, bool(passed), detail))
        return bool(passed)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks) and not self.errors


def _fmt(v) -> str:
    if isinstance(v, np.generic):
        v = v.item()
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path, table: Table) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(table.header)
        for row in table.rows:
            w.writerow([_fmt(v) for v in row])


def summary_lines(result: ScenarioResult) -> list:
    lines = [f"scenario {result.name} ({result.experiment}) seed={result.seed}: "
             f"{'PASS' if result.passed else 'FAIL'}"]
    for c in result.checks:
        lines.append(f"  [{'pass' if c.passed else 'FAIL'}] {c.name}" + (f": {c.detail}" if c.detail else ""))
    for e in result.errors:
        lines.append(f"  [error] {e}")
    return lines


def emit_report(results: Sequence[ScenarioResult], out_dir) -> list:
    """Write one CSV per scenario table and a summary.txt; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for res in results:
        for key, table in res.tables.items():
            name = res.name if key == "main" else f"{res.name}_{key}"
            path = out / f"{name}.csv"
            write_csv(path, table)
            written.append(path)
    lines = []
    for res in results:
        lines += summary_lines(res)
    total = sum(len(r.checks) for r in results)
    failed = sum(not c.passed for r in results for c in r.checks)
    lines.append(f"checks: {total - failed}/{total} passed")
    path = out / "summary.txt"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    written.append(path)
    return written
