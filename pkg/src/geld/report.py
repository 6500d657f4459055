"""Run reports: per-instance records plus aggregates, as JSON and as a
human-readable table."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field


@dataclass
class ReportRow:
    name: str
    n: int
    method: str
    length: float
    gap_pct: float | None
    seconds: float
    seed: int


@dataclass
class RunReport:
    rows: list[ReportRow] = field(default_factory=list)

    def add(self, **kw) -> None:
        self.rows.append(ReportRow(**kw))

    def aggregates(self) -> dict:
        by_method: dict[str, list[ReportRow]] = {}
        for r in self.rows:
            by_method.setdefault(r.method, []).append(r)
        out = {}
        for method, rows in by_method.items():
            gaps = [r.gap_pct for r in rows if r.gap_pct is not None]
            out[method] = {
                "count": len(rows),
                "mean_length": sum(r.length for r in rows) / len(rows),
                "mean_gap_pct": sum(gaps) / len(gaps) if gaps else None,
                "total_seconds": sum(r.seconds for r in rows),
            }
        return out

    def to_json(self) -> str:
        return json.dumps(
            {"rows": [asdict(r) for r in self.rows], "aggregates": self.aggregates()},
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        doc = json.loads(text)
        report = cls()
        for r in doc["rows"]:
            report.add(**r)
        return report

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json() + "\n")

    def format_table(self) -> str:
        header = f"{'name':<24} {'n':>6} {'method':<10} {'length':>14} {'gap_pct':>8} {'seconds':>8}"
        lines = [header, "-" * len(header)]
        for r in self.rows:
            gap = f"{r.gap_pct:8.2f}" if r.gap_pct is not None else " " * 8
            lines.append(
                f"{r.name:<24} {r.n:>6} {r.method:<10} {r.length:>14.4f} {gap} {r.seconds:>8.2f}"
            )
        for method, agg in self.aggregates().items():
            gap = f"{agg['mean_gap_pct']:.2f}" if agg["mean_gap_pct"] is not None else "-"
            lines.append(
                f"[{method}] count={agg['count']} mean_length={agg['mean_length']:.4f} "
                f"mean_gap={gap} total_seconds={agg['total_seconds']:.2f}"
            )
        return "\n".join(lines)
